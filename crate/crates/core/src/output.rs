//! Persistence of run results: the effective configuration, long-format CSV,
//! a JSON summary, optimizer histories and optional SVG plots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cmaes::CmaesResult;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::harness::{OmegaScan, ResultRecord, RunOutcome, SpectrumLine, SweepOutcome};
use crate::interlayer::SweepResult;
use crate::plot::{LinePlot, Series};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// One row of the long-format results table.
#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    point: usize,
    axis: Option<&'a str>,
    axis_value: Option<f64>,
    mode: &'a str,
    band: Option<usize>,
    task: &'a str,
    metric: &'a str,
    mean: f64,
    std: f64,
    n_folds: usize,
    config_hash: &'a str,
}

impl<'a> ResultRow<'a> {
    fn new(point: usize, r: &'a ResultRecord) -> Self {
        Self {
            point,
            axis: r.axis.map(|a| a.name()),
            axis_value: r.axis_value,
            mode: r.mode.name(),
            band: r.band,
            task: &r.task,
            metric: r.metric.name(),
            mean: r.mean,
            std: r.std,
            n_folds: r.fold_scores.len(),
            config_hash: &r.config_hash,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Serialization(format!("{}: {e}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_effective_config(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(EFFECTIVE_CONFIG);
    write_text(&path, &cfg.to_toml_string()?)?;
    Ok(path)
}

pub fn write_results_csv<'a>(path: &Path, records: impl IntoIterator<Item = &'a ResultRecord>) -> Result<()> {
    write_rows(path, records.into_iter().enumerate().map(|(i, r)| ResultRow::new(i, r)))
}

/// Columns `evaluation_index, generation, score, weights_db_0, ...`.
pub fn write_cmaes_history(path: &Path, result: &CmaesResult) -> Result<()> {
    let n = result.evaluations.first().map_or(0, |e| e.x.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["evaluation_index".to_string(), "generation".into(), "score".into()];
    header.extend((0..n).map(|i| format!("weights_db_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for e in &result.evaluations {
        let mut row = vec![e.index.to_string(), e.generation.to_string(), e.score.to_string()];
        row.extend(e.x.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct CurveRow<'a> {
    att_db: f64,
    score: Option<f64>,
    error: Option<&'a str>,
}

pub fn write_sweep_curve(path: &Path, sweep: &SweepResult) -> Result<()> {
    write_rows(
        path,
        sweep.curve.iter().map(|p| CurveRow {
            att_db: p.att_db,
            score: p.score,
            error: p.error.as_deref(),
        }),
    )
}

fn write_optimizer_files(dir: &Path, suffix: &str, outcome: &RunOutcome, plot: bool) -> Result<()> {
    if let Some(sweep) = &outcome.sweep {
        write_sweep_curve(&dir.join(format!("attenuation_sweep{suffix}.csv")), sweep)?;
        if plot {
            let curve = LinePlot {
                title: "Uniform inter-layer attenuation".into(),
                x_label: "attenuation (dB)".into(),
                y_label: format!("validation {}", outcome.record.metric.name()),
                series: vec![Series {
                    name: "deep".into(),
                    points: sweep.curve.iter().filter_map(|p| p.score.map(|s| (p.att_db, s))).collect(),
                }],
            };
            write_text(&dir.join(format!("attenuation_sweep{suffix}.svg")), &curve.to_svg())?;
        }
    }
    if let Some(cmaes) = &outcome.cmaes {
        write_cmaes_history(&dir.join(format!("cmaes_history{suffix}.csv")), cmaes)?;
        if plot {
            let curve = LinePlot {
                title: "CMA-ES best-so-far".into(),
                x_label: "generation".into(),
                y_label: format!("validation {}", outcome.record.metric.name()),
                series: vec![Series {
                    name: "best".into(),
                    points: cmaes
                        .generation_best
                        .iter()
                        .enumerate()
                        .map(|(g, s)| (g as f64, *s))
                        .collect(),
                }],
            };
            write_text(&dir.join(format!("cmaes_history{suffix}.svg")), &curve.to_svg())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    records: [&'a ResultRecord; 1],
}

/// Writes the files of a single run into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome, plot: bool) -> Result<()> {
    write_effective_config(dir, cfg)?;
    write_results_csv(&dir.join(RESULTS_CSV), [&outcome.record])?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &RunSummary {
            records: [&outcome.record],
        },
    )?;
    write_optimizer_files(dir, "", outcome, plot)
}

#[derive(Serialize)]
struct SweepFile<'a> {
    summary: &'a crate::harness::SweepSummary,
    records: Vec<&'a ResultRecord>,
}

pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, outcome: &SweepOutcome, plot: bool) -> Result<()> {
    write_effective_config(dir, cfg)?;
    let records: Vec<&ResultRecord> = outcome.points.iter().map(|p| &p.record).collect();
    write_results_csv(&dir.join(RESULTS_CSV), records.iter().copied())?;
    write_json(
        &dir.join(SUMMARY_JSON),
        &SweepFile {
            summary: &outcome.summary,
            records,
        },
    )?;
    for (i, point) in outcome.points.iter().enumerate() {
        write_optimizer_files(dir, &format!("_{i}"), point, plot)?;
    }
    if plot {
        let s = &outcome.summary;
        let chart = LinePlot {
            title: format!("{} on {}", s.mode, s.task),
            x_label: s.axis.name().into(),
            y_label: s.metric.name().into(),
            series: vec![Series {
                name: s.mode.name().into(),
                points: s.values.iter().copied().zip(s.means.iter().copied()).collect(),
            }],
        };
        write_text(&dir.join("sweep.svg"), &chart.to_svg())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OmegaRow {
    omega_ghz: f64,
    band1_mean: f64,
    band1_std: f64,
    band2_mean: f64,
    band2_std: f64,
}

pub fn write_omega_scan(dir: &Path, cfg: &ExperimentConfig, scan: &OmegaScan, plot: bool) -> Result<()> {
    write_effective_config(dir, cfg)?;
    write_rows(
        &dir.join("omega_scan.csv"),
        scan.points.iter().map(|p| OmegaRow {
            omega_ghz: p.omega_ghz,
            band1_mean: p.bands[0].mean,
            band1_std: p.bands[0].std,
            band2_mean: p.bands[1].mean,
            band2_std: p.bands[1].std,
        }),
    )?;
    write_results_csv(&dir.join(RESULTS_CSV), scan.points.iter().flat_map(|p| p.bands.iter()))?;
    write_json(&dir.join(SUMMARY_JSON), scan)?;
    if plot {
        let chart = LinePlot {
            title: "Per-band score against line spacing".into(),
            x_label: "line spacing (GHz)".into(),
            y_label: scan.metric.name().into(),
            series: (0..2)
                .map(|b| Series {
                    name: format!("band {}", b + 1),
                    points: scan.points.iter().map(|p| (p.omega_ghz, p.bands[b].mean)).collect(),
                })
                .collect(),
        };
        write_text(&dir.join("omega_scan.svg"), &chart.to_svg())?;
    }
    Ok(())
}

pub fn write_spectrum_csv<W: std::io::Write>(out: W, lines: &[SpectrumLine]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in lines {
        w.serialize(l).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn spectrum_plot(lines: &[SpectrumLine]) -> LinePlot {
    LinePlot {
        title: "Input comb".into(),
        x_label: "offset from band center (GHz)".into(),
        y_label: "relative line power (dB)".into(),
        series: (1..=2)
            .map(|band| Series {
                name: format!("band {band}"),
                points: lines
                    .iter()
                    .filter(|l| l.band == band)
                    .map(|l| (l.offset_ghz, l.power_db))
                    .collect(),
            })
            .collect(),
    }
}

/// Reads the records of a `summary.json` written by this module.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    #[derive(serde::Deserialize)]
    struct Records {
        records: Vec<ResultRecord>,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(scan) = serde_json::from_str::<OmegaScan>(&text) {
        return Ok(scan.points.into_iter().flat_map(|p| p.bands).collect());
    }
    let parsed: Records = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(parsed.records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmaes::Evaluation;

    #[test]
    fn history_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let result = CmaesResult {
            best_x: vec![-1.0, -2.0],
            best_score: 0.5,
            evaluations: vec![
                Evaluation {
                    index: 0,
                    generation: 0,
                    score: 0.5,
                    x: vec![-1.0, -2.0],
                },
                Evaluation {
                    index: 1,
                    generation: 0,
                    score: 0.75,
                    x: vec![-3.0, -4.5],
                },
            ],
            generation_best: vec![0.5],
            restarts: 0,
        };
        write_cmaes_history(&path, &result).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "evaluation_index,generation,score,weights_db_0,weights_db_1");
        assert_eq!(lines[2], "1,0,0.75,-3,-4.5");
    }
}
