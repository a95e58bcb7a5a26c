//! Deterministic SVG plot emission: hand-built polylines and axes, no
//! plotting dependency. Identical inputs produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};
use crate::metrics::{read_jsonl, EpisodeRecord};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Returns,
    Mi,
    AuxLoss,
    Trajectories,
}

/// One step of a trajectory dump (JSONL, one object per step).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: usize,
    pub step: usize,
    pub positions: Vec<[f32; 2]>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub landmarks: Vec<[f32; 2]>,
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new() -> Self {
        Canvas { body: String::new() }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut s = String::new();
        for (x, y) in pts {
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/>"#,
            s.trim_end()
        );
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str) {
        let mut s = String::new();
        for (x, y) in pts {
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(self.body, r#"<polygon fill="{fill}" fill-opacity="0.25" stroke="none" points="{}"/>"#, s.trim_end());
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.1}" font-family="monospace">{content}</text>"#
        );
    }

    fn finish(self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<title>{title}</title>\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut f = Frame { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY };
        for x in xs {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
        }
        for y in ys {
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if f.x_min >= f.x_max {
            f.x_max = f.x_min + 1.0;
        }
        if f.y_min >= f.y_max {
            f.y_max = f.y_min + 1.0;
        }
        f
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    }
}

fn draw_axes(c: &mut Canvas, f: &Frame, x_label: &str, y_label: &str) {
    c.line(MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, "#333333");
    c.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "#333333");
    c.text(WIDTH / 2.0 - 24.0, HEIGHT - 12.0, 11.0, x_label);
    c.text(8.0, MARGIN - 14.0, 11.0, y_label);
    c.text(MARGIN, HEIGHT - MARGIN + 16.0, 9.0, &format!("{:.1}", f.x_min));
    c.text(WIDTH - MARGIN - 24.0, HEIGHT - MARGIN + 16.0, 9.0, &format!("{:.1}", f.x_max));
    c.text(4.0, HEIGHT - MARGIN, 9.0, &format!("{:.2}", f.y_min));
    c.text(4.0, MARGIN + 4.0, 9.0, &format!("{:.2}", f.y_max));
}

/// Per-seed curves aligned by position: seed -> y series.
type Series = Vec<Vec<f64>>;

/// Mean polyline plus a min/max band when more than one seed is present.
fn draw_band_series(c: &mut Canvas, f: &Frame, series: &Series, color: &str) {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return;
    }
    if series.len() > 1 {
        let mut band = Vec::with_capacity(2 * len);
        for i in 0..len {
            let hi = series.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max);
            band.push(f.map(i as f64, hi));
        }
        for i in (0..len).rev() {
            let lo = series.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
            band.push(f.map(i as f64, lo));
        }
        c.polygon(&band, color);
    }
    let mean: Vec<(f64, f64)> = (0..len)
        .map(|i| {
            let m = series.iter().map(|s| s[i]).sum::<f64>() / series.len() as f64;
            f.map(i as f64, m)
        })
        .collect();
    c.polyline(&mean, color);
}

fn load_all(metrics_paths: &[PathBuf]) -> Result<Vec<Vec<EpisodeRecord>>> {
    if metrics_paths.is_empty() {
        return Err(MraError::Parameter("at least one metrics file required".into()));
    }
    let mut out = Vec::with_capacity(metrics_paths.len());
    for p in metrics_paths {
        let records = read_jsonl(p)?;
        if records.is_empty() {
            return Err(MraError::Parameter(format!("{} holds no records", p.display())));
        }
        out.push(records);
    }
    Ok(out)
}

fn field_series(per_seed: &[Vec<EpisodeRecord>], game_id: usize, field: impl Fn(&EpisodeRecord) -> f64) -> Series {
    per_seed
        .iter()
        .map(|records| records.iter().filter(|r| r.game_id == game_id).map(&field).collect())
        .collect()
}

fn game_ids(per_seed: &[Vec<EpisodeRecord>]) -> Vec<usize> {
    let mut ids: Vec<usize> = per_seed.iter().flatten().map(|r| r.game_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Emit the requested plot kind into `out_dir`; returns written paths.
pub fn emit_plots(metrics_paths: &[PathBuf], kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    match kind {
        PlotKind::Returns => {
            let per_seed = load_all(metrics_paths)?;
            let mut written = Vec::new();
            for game in game_ids(&per_seed) {
                let roles = per_seed[0]
                    .iter()
                    .find(|r| r.game_id == game)
                    .map(|r| r.role_returns.len())
                    .unwrap_or(1);
                let mut all_series = Vec::with_capacity(roles);
                for role in 0..roles {
                    all_series.push(field_series(&per_seed, game, |r| {
                        r.role_returns.get(role).copied().unwrap_or(0.0)
                    }));
                }
                let max_len = all_series.iter().flatten().map(Vec::len).max().unwrap_or(1);
                let f = Frame::fit(
                    [0.0, (max_len.max(2) - 1) as f64].into_iter(),
                    all_series.iter().flatten().flatten().copied(),
                );
                let mut c = Canvas::new();
                draw_axes(&mut c, &f, "episode", "return");
                for (role, series) in all_series.iter().enumerate() {
                    draw_band_series(&mut c, &f, series, PALETTE[role % PALETTE.len()]);
                }
                let path = out_dir.join(format!("returns_game{game}.svg"));
                std::fs::write(&path, c.finish(&format!("returns, game {game}")))?;
                written.push(path);
            }
            Ok(written)
        }
        PlotKind::Mi | PlotKind::AuxLoss => {
            let per_seed = load_all(metrics_paths)?;
            let (field, name): (fn(&EpisodeRecord) -> f64, &str) = match kind {
                PlotKind::Mi => (|r| r.mi_bound, "mi"),
                _ => (|r| r.aux_loss, "aux_loss"),
            };
            let series: Series = per_seed.iter().map(|rs| rs.iter().map(field).collect()).collect();
            let max_len = series.iter().map(Vec::len).max().unwrap_or(1);
            let f = Frame::fit(
                [0.0, (max_len.max(2) - 1) as f64].into_iter(),
                series.iter().flatten().copied(),
            );
            let mut c = Canvas::new();
            draw_axes(&mut c, &f, "episode", name);
            draw_band_series(&mut c, &f, &series, PALETTE[0]);
            let path = out_dir.join(format!("{name}.svg"));
            std::fs::write(&path, c.finish(name))?;
            Ok(vec![path])
        }
        PlotKind::Trajectories => {
            if metrics_paths.len() != 1 {
                return Err(MraError::Parameter("trajectory plots take exactly one dump file".into()));
            }
            let text = std::fs::read_to_string(&metrics_paths[0])?;
            let mut steps: Vec<TrajectoryRecord> = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                steps.push(
                    serde_json::from_str(line)
                        .map_err(|e| MraError::Parse(format!("{}:{}: {e}", metrics_paths[0].display(), i + 1)))?,
                );
            }
            if steps.is_empty() {
                return Err(MraError::Parameter("empty trajectory dump".into()));
            }
            let first_episode = steps[0].episode;
            let steps: Vec<&TrajectoryRecord> = steps.iter().filter(|s| s.episode == first_episode).collect();
            let f = Frame { x_min: -1.25, x_max: 1.25, y_min: -1.25, y_max: 1.25 };
            let mut c = Canvas::new();
            draw_axes(&mut c, &f, "x", "y");
            for lm in &steps[0].landmarks {
                let (x, y) = f.map(lm[0] as f64, lm[1] as f64);
                c.circle(x, y, 4.0, "#bbbbbb");
            }
            let agents = steps[0].positions.len();
            for a in 0..agents {
                let pts: Vec<(f64, f64)> =
                    steps.iter().map(|s| f.map(s.positions[a][0] as f64, s.positions[a][1] as f64)).collect();
                c.polyline(&pts, PALETTE[a % PALETTE.len()]);
            }
            let path = out_dir.join("trajectories.svg");
            std::fs::write(&path, c.finish("trajectories"))?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::write_jsonl;

    fn record(episode: usize, ret: f64) -> EpisodeRecord {
        EpisodeRecord { episode, game_id: 0, role_returns: vec![ret], mi_bound: 0.1 * ret, aux_loss: 0.5, wall_ms: 0 }
    }

    #[test]
    fn two_point_metrics_give_single_polyline() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.jsonl");
        write_jsonl(&m, &[record(0, 1.0), record(1, 2.0)]).unwrap();
        let written = emit_plots(&[m], PlotKind::Returns, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let vertex_count = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap().split(' ').count();
        assert_eq!(vertex_count, 2);
    }

    #[test]
    fn four_seeds_get_minmax_band() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for s in 0..4 {
            let p = dir.path().join(format!("m{s}.jsonl"));
            write_jsonl(&p, &[record(0, s as f64), record(1, 1.0 + s as f64)]).unwrap();
            paths.push(p);
        }
        let written = emit_plots(&paths, PlotKind::Returns, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 1, "band polygon expected");
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn mi_kind_plots_mi_bound_field() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.jsonl");
        write_jsonl(&m, &[record(0, 3.0), record(1, 5.0)]).unwrap();
        let written = emit_plots(&[m], PlotKind::Mi, dir.path()).unwrap();
        assert!(written[0].file_name().unwrap().to_str().unwrap().contains("mi"));
        let svg = std::fs::read_to_string(&written[0]).unwrap();
        // y range reflects mi_bound values 0.3..0.5, not returns 3..5
        assert!(svg.contains("0.50"), "{svg}");
    }

    #[test]
    fn plot_emission_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.jsonl");
        write_jsonl(&m, &[record(0, 1.0), record(1, -0.5), record(2, 0.25)]).unwrap();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        let w1 = emit_plots(&[m.clone()], PlotKind::Returns, &out1).unwrap();
        let w2 = emit_plots(&[m], PlotKind::Returns, &out2).unwrap();
        assert_eq!(std::fs::read(&w1[0]).unwrap(), std::fs::read(&w2[0]).unwrap());
    }

    #[test]
    fn empty_metrics_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.jsonl");
        std::fs::write(&m, "").unwrap();
        assert!(emit_plots(&[m], PlotKind::Returns, dir.path()).is_err());
    }

    #[test]
    fn trajectory_plot_draws_agent_paths() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("traj.jsonl");
        let mut lines = String::new();
        for step in 0..3 {
            let rec = TrajectoryRecord {
                episode: 0,
                step,
                positions: vec![[step as f32 * 0.1, 0.0], [0.0, step as f32 * 0.1]],
                actions: vec![4, 1],
                rewards: vec![0.0, 0.0],
                landmarks: vec![[0.5, 0.5]],
            };
            lines.push_str(&serde_json::to_string(&rec).unwrap());
            lines.push('\n');
        }
        std::fs::write(&t, lines).unwrap();
        let written = emit_plots(&[t], PlotKind::Trajectories, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
