//! Metrics CSV parsing, mean ± SEM summaries and a hand-rolled SVG
//! learning-curve plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::train::parse_pairs;

/// One parsed metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("empty metrics CSV"))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let row = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::format(format!("metrics row {}: {e}", i + 1)))?;
                if row.len() != columns.len() {
                    return Err(Error::format(format!("metrics row {} has {} fields", i + 1, row.len())));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::format("metrics CSV has no rows"));
        }
        Ok(MetricsTable { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Name of the column starting with `prefix` (`student_` or `teacher_`).
    pub fn metric_column(&self, prefix: &str) -> Option<&str> {
        self.columns.iter().find(|c| c.starts_with(prefix)).map(String::as_str)
    }
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    MetricsTable::parse(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Sample mean and standard error `s/√n` (zero for a single value).
pub fn mean_sem(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// Runs sharing a label (the method recorded next to each CSV).
#[derive(Clone, Debug, PartialEq)]
pub struct RunGroup {
    pub label: String,
    pub metric: String,
    pub runs: Vec<MetricsTable>,
}

impl RunGroup {
    fn final_values(&self, prefix: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|t| t.column(t.metric_column(prefix)?))
            .filter_map(|c| c.last().copied())
            .collect()
    }

    /// Mean curve over runs, truncated to the shortest run.
    pub fn mean_curve(&self, prefix: &str) -> Vec<f64> {
        let curves: Vec<Vec<f64>> = self
            .runs
            .iter()
            .filter_map(|t| t.column(t.metric_column(prefix)?))
            .collect();
        let len = curves.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
            .collect()
    }
}

fn label_for(csv: &Path) -> String {
    let from_config = csv
        .parent()
        .map(|d| d.join("config.txt"))
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| parse_pairs(&t).ok())
        .and_then(|pairs| {
            let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
            let method = get("method")?;
            Some(match get("use_pm").as_deref() {
                Some("true") => format!("{method}+pm"),
                _ => method,
            })
        });
    from_config.unwrap_or_else(|| "runs".to_string())
}

/// Reads every CSV and groups the runs by label, in first-seen order.
pub fn group_runs(paths: &[PathBuf]) -> Result<Vec<RunGroup>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, RunGroup> = BTreeMap::new();
    for path in paths {
        let table = read_metrics(path)?;
        let metric = table
            .metric_column("student_")
            .ok_or_else(|| Error::format(format!("{}: no student_ metric column", path.display())))?
            .trim_start_matches("student_")
            .to_string();
        let label = label_for(path);
        let group = groups.entry(label.clone()).or_insert_with(|| {
            order.push(label.clone());
            RunGroup {
                label,
                metric: metric.clone(),
                runs: Vec::new(),
            }
        });
        if group.metric != metric {
            return Err(Error::format(format!("{}: mixes {} and {metric} runs", path.display(), group.metric)));
        }
        group.runs.push(table);
    }
    Ok(order.into_iter().filter_map(|l| groups.remove(&l)).collect())
}

/// Final-epoch metric of each group as `mean ± SEM` over its runs.
pub fn summary(groups: &[RunGroup]) -> String {
    let mut out = format!("{:<16} {:>4}  {:<20} {:<20}\n", "method", "runs", "student", "teacher");
    for g in groups {
        let cell = |prefix: &str| match mean_sem(&g.final_values(prefix)) {
            Some((m, s)) => format!("{} {:.4} ± {:.4}", g.metric, m, s),
            None => "-".to_string(),
        };
        let _ = writeln!(out, "{:<16} {:>4}  {:<20} {:<20}", g.label, g.runs.len(), cell("student_"), cell("teacher_"));
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Mean student (solid) and teacher (dashed) metric per epoch for each group.
pub fn render_svg(groups: &[RunGroup]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let epochs = groups
        .iter()
        .map(|g| g.mean_curve("student_").len())
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |i: usize| left + pw * i as f64 / (epochs - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}" stroke="#ddd"/><text x="{tx:.1}" y="{ty:.1}" text-anchor="end">{v:.1}</text>"##,
            y0 = y(v),
            x1 = left + pw,
            tx = left - 6.0,
            ty = y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{cx:.1}" y="{by:.1}" text-anchor="middle">epoch (1 to {epochs})</text>"#,
        cx = left + pw / 2.0,
        by = h - 15.0
    );
    let metric = groups.first().map_or("metric", |g| g.metric.as_str());
    let _ = writeln!(
        s,
        r#"<text x="15" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 15 {cy:.1})">target {metric}</text>"#,
        cy = top + ph / 2.0
    );
    for (gi, g) in groups.iter().enumerate() {
        let colour = PALETTE[gi % PALETTE.len()];
        for (prefix, dash) in [("student_", ""), ("teacher_", r#" stroke-dasharray="5,3""#)] {
            let curve = g.mean_curve(prefix);
            if curve.is_empty() {
                continue;
            }
            let pts: Vec<String> = curve.iter().enumerate().map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 16.0 * gi as f64 + 8.0;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{tx}" y="{ty}">{label} (n={n})</text>"#,
            lx2 = lx + 20.0,
            tx = lx + 26.0,
            ty = ly + 4.0,
            label = g.label,
            n = g.runs.len()
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{lx}" y="{ty}" fill="#555">solid: student, dashed: teacher</text>"##,
        lx = left + pw + 12.0,
        ty = top + 16.0 * groups.len() as f64 + 20.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sem_of_three_runs() {
        let (m, s) = mean_sem(&[0.7, 0.8, 0.9]).unwrap();
        assert!((m - 0.8).abs() < 1e-15);
        // sample std 0.1, so SEM = 0.1/√3
        assert!((s - 0.1 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_sem(&[0.5]), Some((0.5, 0.0)));
        assert_eq!(mean_sem(&[]), None);
    }

    #[test]
    fn parses_and_rejects_tables() {
        let t = MetricsTable::parse("epoch,student_acc,teacher_acc\n1,0.5,0.25\n2,0.75,0.5\n").unwrap();
        assert_eq!(t.column("student_acc").unwrap(), vec![0.5, 0.75]);
        assert_eq!(t.metric_column("teacher_"), Some("teacher_acc"));
        assert!(MetricsTable::parse("epoch,x\n1\n").is_err());
        assert!(MetricsTable::parse("epoch,x\n1,abc\n").is_err());
        assert!(MetricsTable::parse("epoch,x\n").is_err());
    }

    #[test]
    fn groups_by_method_and_plots() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (i, (method, acc)) in [("sen", 0.8), ("source-only", 0.6), ("sen", 0.9)].iter().enumerate() {
            let run = dir.path().join(format!("run{i}"));
            std::fs::create_dir(&run).unwrap();
            std::fs::write(run.join("config.txt"), format!("method={method}\nuse_pm=false\n")).unwrap();
            std::fs::write(
                run.join("metrics.csv"),
                format!("epoch,student_acc,teacher_acc\n1,0.1,0.1\n2,{acc},{acc}\n"),
            )
            .unwrap();
            paths.push(run.join("metrics.csv"));
        }
        let groups = group_runs(&paths).unwrap();
        assert_eq!(groups.iter().map(|g| g.label.as_str()).collect::<Vec<_>>(), ["sen", "source-only"]);
        assert_eq!(groups[0].runs.len(), 2);
        let text = summary(&groups);
        assert!(text.contains("acc 0.8500 ± 0.0500"), "{text}");
        let svg = render_svg(&groups);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
    }
}
