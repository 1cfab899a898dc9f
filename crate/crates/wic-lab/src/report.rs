//! Post-training reports: evaluation endpoints per skill and per-skill
//! reward heatmaps, emitted as CSV and standalone SVG.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::grid::{GridSpec, GridState};
use crate::reinforce::SkillPolicy;
use crate::runner::ObjectiveModel;
use crate::skills::{run_skill_episode, SkillId};
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub struct EndpointRow {
    pub skill: usize,
    pub end: GridState,
    pub distance: f64,
}

/// Rolls each skill out `n_rollouts` times from the canonical start and
/// records where it ends up, with the step-count distance from the start.
pub fn endpoint_report(
    spec: &GridSpec,
    policy: &SkillPolicy,
    cfg: &ExperimentConfig,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<EndpointRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = spec.bfs_distances(spec.start_cell)?;
    let mut rows = Vec::with_capacity(cfg.k * n_rollouts);
    for k in 0..cfg.k {
        for _ in 0..n_rollouts {
            let ep = run_skill_episode(spec, policy, SkillId(k), spec.start_cell, cfg.t, &mut rng)?;
            let end = ep.end_state();
            rows.push(EndpointRow {
                skill: k,
                end,
                distance: table[spec.cell_index(end)].map(f64::from).unwrap_or(f64::NAN),
            });
        }
    }
    Ok(rows)
}

pub fn endpoint_csv(rows: &[EndpointRow]) -> String {
    let mut s = String::from("skill,end_row,end_col,bfs_distance\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.skill, r.end.row, r.end.col, r.distance));
    }
    s
}

/// Per-skill grids of the learned reward signal over every non-wall cell,
/// evaluated against the canonical start state. Wall cells hold NaN.
pub fn reward_heatmap(
    spec: &GridSpec,
    objective: &ObjectiveModel,
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<f64>>> {
    let s0 = spec.start_cell;
    let mut maps = vec![vec![f64::NAN; spec.width * spec.height]; cfg.k];
    match objective {
        ObjectiveModel::Wic(bank) => {
            let base = bank.potential_all(spec, s0, s0)?;
            for s in spec.valid_states() {
                let heads = bank.potential_all(spec, s, s0)?;
                for k in 0..cfg.k {
                    maps[k][spec.cell_index(s)] = heads[k] - base[k];
                }
            }
        }
        ObjectiveModel::Vic(d) => {
            let log_k = (cfg.k as f64).ln();
            for s in spec.valid_states() {
                let posterior = d.skill_posterior(spec, s, s0)?;
                for k in 0..cfg.k {
                    maps[k][spec.cell_index(s)] = posterior[k].max(1e-300).ln() + log_k;
                }
            }
        }
    }
    Ok(maps)
}

pub fn heatmap_csv(spec: &GridSpec, maps: &[Vec<f64>]) -> String {
    let mut s = String::from("skill,row,col,value\n");
    for (k, map) in maps.iter().enumerate() {
        for r in 0..spec.height {
            for c in 0..spec.width {
                let v = map[r * spec.width + c];
                if !v.is_nan() {
                    s.push_str(&format!("{k},{r},{c},{v}\n"));
                }
            }
        }
    }
    s
}

/// One standalone SVG per skill: blue for negative, white at zero, red for
/// positive, walls dark gray.
pub fn heatmap_svg(spec: &GridSpec, map: &[f64]) -> String {
    let cell = 24usize;
    let w = spec.width * cell;
    let h = spec.height * cell;
    let max_abs = map
        .iter()
        .filter(|v| !v.is_nan())
        .fold(0f64, |m, &v| m.max(v.abs()))
        .max(1e-12);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for r in 0..spec.height {
        for c in 0..spec.width {
            let v = map[r * spec.width + c];
            let color = if v.is_nan() {
                "#404040".to_string()
            } else {
                let t = (v / max_abs).clamp(-1.0, 1.0);
                let (red, green, blue) = if t >= 0.0 {
                    (255, (255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - t)) as u8)
                } else {
                    ((255.0 * (1.0 + t)) as u8, (255.0 * (1.0 + t)) as u8, 255)
                };
                format!("#{red:02x}{green:02x}{blue:02x}")
            };
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{color}\"/>\n",
                c * cell,
                r * cell
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Endpoint scatter over the grid, one SVG with a color per skill.
pub fn endpoint_svg(spec: &GridSpec, rows: &[EndpointRow]) -> String {
    let cell = 24usize;
    let w = spec.width * cell;
    let h = spec.height * cell;
    let colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for r in 0..spec.height {
        for c in 0..spec.width {
            let fill = if spec.is_wall(GridState::new(r, c)) { "#404040" } else { "#f5f5f5" };
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#dddddd\"/>\n",
                c * cell,
                r * cell
            ));
        }
    }
    // start marker
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\"/>\n",
        spec.start_cell.col * cell,
        spec.start_cell.row * cell
    ));
    for row in rows {
        let color = colors[row.skill % colors.len()];
        // jitter-free: offset each skill's dot within the cell
        let dx = (row.skill % 2) * (cell / 2) + cell / 4;
        let dy = (row.skill / 2 % 2) * (cell / 2) + cell / 4;
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n",
            row.end.col * cell + dx,
            row.end.row * cell + dy
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the full report set for a trained run directory.
pub fn write_report(
    spec: &GridSpec,
    policy: &SkillPolicy,
    objective: &ObjectiveModel,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let endpoints = endpoint_report(spec, policy, cfg, cfg.eval_rollouts, cfg.seed ^ 0x5eed)?;
    std::fs::write(out_dir.join("endpoints.csv"), endpoint_csv(&endpoints))?;
    std::fs::write(out_dir.join("endpoints.svg"), endpoint_svg(spec, &endpoints))?;
    let maps = reward_heatmap(spec, objective, cfg)?;
    std::fs::write(out_dir.join("heatmaps.csv"), heatmap_csv(spec, &maps))?;
    for (k, map) in maps.iter().enumerate() {
        std::fs::write(out_dir.join(format!("heatmap_skill{k}.svg")), heatmap_svg(spec, map))?;
    }
    Ok(())
}
