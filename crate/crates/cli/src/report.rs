//! Long-format plot data (`series,n_or_t,value`) rendered from run artifacts.

use std::path::Path;

use ttslab::io::{embedded_hash, Csv};

use crate::CliError;

/// Artifacts `ttslab report` looks for, in rendering order.
pub const KNOWN_ARTIFACTS: [&str; 12] = [
    "trajectory.csv",
    "ensemble.csv",
    "ode.csv",
    "sde.csv",
    "segments.csv",
    "events.csv",
    "compare.csv",
    "sweep.csv",
    "exit_times.csv",
    "occupancy.csv",
    "dominance.csv",
    "exhaustive.csv",
];

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str, file: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Io(format!("{file}: missing column `{name}`")))
    }

    fn pairs(&self, file: &str, x: &str, y: &str) -> Result<Vec<(String, String)>, CliError> {
        let (i, j) = (self.col(x, file)?, self.col(y, file)?);
        Ok(self
            .rows
            .iter()
            .filter(|r| !r[j].is_empty())
            .map(|r| (r[i].clone(), r[j].clone()))
            .collect())
    }
}

fn read_table(dir: &Path, file: &str) -> Result<(String, Table), CliError> {
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let hash = embedded_hash(&text)
        .ok_or_else(|| CliError::Io(format!("{file}: no embedded config hash")))?
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Io(format!("{file}: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Io(format!("{file}: {e}")))?;
    Ok((hash, Table { headers, rows }))
}

fn segment_code(label: &str) -> &'static str {
    match label {
        "initial" => "0",
        "middle" => "1",
        _ => "2",
    }
}

/// Render plot rows for the listed artifacts of one run directory.
///
/// Files that carry no plottable series are skipped. Every artifact must embed
/// the same configuration hash.
pub fn render_files(dir: &Path, files: &[String]) -> Result<String, CliError> {
    let mut hash: Option<String> = None;
    let mut rows: Vec<[String; 3]> = Vec::new();
    let mut sde_time: Option<Vec<String>> = None;
    let mut used = 0;
    for file in files.iter().filter(|f| KNOWN_ARTIFACTS.contains(&f.as_str())) {
        let (h, t) = read_table(dir, file)?;
        match &hash {
            Some(prev) if *prev != h => {
                return Err(CliError::Io(format!("{file}: config hash {h} differs from {prev}")));
            }
            _ => hash = Some(h),
        }
        used += 1;
        let mut push = |series: &str, pairs: Vec<(String, String)>| {
            rows.extend(pairs.into_iter().map(|(x, y)| [series.to_string(), x, y]));
        };
        match file.as_str() {
            "trajectory.csv" => push("loss", t.pairs(file, "n", "loss")?),
            "ode.csv" => push("loss", t.pairs(file, "t", "loss")?),
            "sde.csv" => {
                let i = t.col("t", file)?;
                sde_time = Some(t.rows.iter().map(|r| r[i].clone()).collect());
                push("loss", t.pairs(file, "t", "loss")?);
            }
            "ensemble.csv" => push("mean_loss", t.pairs(file, "n", "mean_loss")?),
            "segments.csv" => {
                let (l, s, e) = (t.col("label", file)?, t.col("n_start", file)?, t.col("n_end", file)?);
                for r in &t.rows {
                    let code = segment_code(&r[l]).to_string();
                    push(
                        "segment_boundary",
                        vec![(r[s].clone(), code.clone()), (r[e].clone(), code)],
                    );
                }
            }
            "events.csv" => {
                let (k, s, e, m) = (
                    t.col("kind", file)?,
                    t.col("n_start", file)?,
                    t.col("n_end", file)?,
                    t.col("magnitude", file)?,
                );
                // Time-series detectors index records; plot them on the time axis.
                let at = |idx: &str| -> String {
                    match (&sde_time, idx.parse::<usize>()) {
                        (Some(times), Ok(i)) if i < times.len() => times[i].clone(),
                        _ => idx.to_string(),
                    }
                };
                for r in &t.rows {
                    match r[k].as_str() {
                        "plateau" | "ascent" => {
                            let series = format!("{}_span", r[k]);
                            push(&series, vec![(at(&r[s]), r[m].clone()), (at(&r[e]), r[m].clone())]);
                        }
                        kind => push(&kind.replace('-', "_"), vec![(at(&r[s]), r[m].clone())]),
                    }
                }
            }
            "compare.csv" => push("sup_deviation", t.pairs(file, "t1", "sup_deviation")?),
            "sweep.csv" => {
                push("jitter_rms", t.pairs(file, "cell", "jitter_rms")?);
                push("final_loss", t.pairs(file, "cell", "final_loss")?);
            }
            "exit_times.csv" => push("mean_exit", t.pairs(file, "s_eps", "mean_exit")?),
            "occupancy.csv" => push("occupancy", t.pairs(file, "epsilon", "fraction")?),
            "dominance.csv" => push("residual", t.pairs(file, "step", "residual")?),
            "exhaustive.csv" => push("exhaustive_residual", t.pairs(file, "step", "residual")?),
            _ => unreachable!(),
        }
    }
    let hash = match (hash, used) {
        (Some(h), n) if n > 0 => h,
        _ => return Err(CliError::Io(format!("{}: no plottable artifacts", dir.display()))),
    };
    let mut csv = Csv::with_header(&hash, &["series", "n_or_t", "value"]);
    for r in rows {
        csv.row(&r);
    }
    Ok(csv.finish())
}

/// Render plot rows for every known artifact present in `dir`.
pub fn render_dir(dir: &Path) -> Result<String, CliError> {
    let present: Vec<String> = KNOWN_ARTIFACTS
        .iter()
        .filter(|f| dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    render_files(dir, &present)
}
