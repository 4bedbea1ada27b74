//! Deterministic SVG charts rendered from report CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("required report file {} is missing", .0.display())]
    MissingCsv(PathBuf),
    #[error("{}: {message}", .file.display())]
    Malformed { file: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Parsed CSV with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Self { headers, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize, String> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn parse_num(s: &str, what: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a number ({what})"))
}

/// Sequential white-to-blue ramp for values in [0, 1].
fn ramp(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(247.0, 8.0),
        mix(251.0, 48.0),
        mix(255.0, 107.0)
    )
}

fn text_color(v: f64) -> &'static str {
    if v > 0.55 {
        "#ffffff"
    } else {
        "#000000"
    }
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        esc(title)
    );
}

fn first_seen(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn sorted_doses(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut doses: Vec<f64> = values.collect();
    doses.sort_by(f64::total_cmp);
    doses.dedup();
    doses
}

fn dose_label(d: f64) -> String {
    format!("{:.0}%", d * 100.0)
}

/// Anti F1 against dose, one polyline per configuration, averaged over seeds.
/// Expects `dose_response.csv` columns.
pub fn dose_response_svg(csv_text: &str) -> Result<String, String> {
    let t = Table::parse(csv_text)?;
    let (cfg, dose, f1, status) = (
        t.col("configuration")?,
        t.col("dose")?,
        t.col("anti_f1")?,
        t.col("status")?,
    );
    let configs = first_seen(t.rows.iter().map(|r| r[cfg].clone()));
    let doses = sorted_doses(
        t.rows
            .iter()
            .map(|r| parse_num(&r[dose], "dose"))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter(),
    );
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 180.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |i: usize| {
        if doses.len() < 2 {
            left + pw / 2.0
        } else {
            left + pw * i as f64 / (doses.len() - 1) as f64
        }
    };
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    header(&mut s, w, h, "Anti F1 vs. augmentation dose");
    let _ = writeln!(
        s,
        r##"<line x1="{left:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000000"/>"##,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{:.1}" stroke="#000000"/>"##,
        top + ph
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<g class="y-tick"><line x1="{:.1}" y1="{:.1}" x2="{left:.1}" y2="{:.1}" stroke="#000000"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text></g>"##,
            left - 4.0,
            y(v),
            y(v),
            left - 6.0,
            y(v) + 4.0
        );
    }
    for (i, d) in doses.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<g class="x-tick"><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000000"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text></g>"##,
            x(i),
            top + ph,
            x(i),
            top + ph + 4.0,
            x(i),
            top + ph + 18.0,
            dose_label(*d)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">augmentation dose</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">Anti F1</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (ci, c) in configs.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let mut points = Vec::new();
        for (di, d) in doses.iter().enumerate() {
            let vals: Vec<f64> = t
                .rows
                .iter()
                .filter(|r| &r[cfg] == c && r[status] == "ok")
                .filter(|r| parse_num(&r[dose], "dose").ok() == Some(*d))
                .filter_map(|r| r[f1].parse::<f64>().ok())
                .collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                points.push((x(di), y(mean)));
            }
        }
        let coords: Vec<String> = points.iter().map(|(a, b)| format!("{a:.1},{b:.1}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-configuration="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            esc(c),
            coords.join(" ")
        );
        for (a, b) in &points {
            let _ = writeln!(s, r#"<circle cx="{a:.1}" cy="{b:.1}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 10.0 + 20.0 * ci as f64;
        let lx = left + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            esc(c)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Configurations by doses, cells shaded by macro F1. Expects `heatmap.csv` columns.
pub fn heatmap_svg(csv_text: &str) -> Result<String, String> {
    let t = Table::parse(csv_text)?;
    let (cfg, dose, f1) = (t.col("configuration")?, t.col("dose")?, t.col("macro_f1")?);
    let configs = first_seen(t.rows.iter().map(|r| r[cfg].clone()));
    let doses = sorted_doses(
        t.rows
            .iter()
            .map(|r| parse_num(&r[dose], "dose"))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter(),
    );
    let (cw, ch, left, top) = (90.0, 40.0, 120.0, 50.0);
    let w = left + cw * doses.len() as f64 + 20.0;
    let h = top + ch * configs.len() as f64 + 40.0;
    let mut s = String::new();
    header(&mut s, w, h, "Macro F1 by configuration and dose");
    for (j, d) in doses.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text class="col-label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + cw * (j as f64 + 0.5),
            top - 8.0,
            dose_label(*d)
        );
    }
    for (i, c) in configs.iter().enumerate() {
        let ry = top + ch * i as f64;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 8.0,
            ry + ch / 2.0 + 4.0,
            esc(c)
        );
        for (j, d) in doses.iter().enumerate() {
            let value = t
                .rows
                .iter()
                .find(|r| &r[cfg] == c && parse_num(&r[dose], "dose").ok() == Some(*d))
                .and_then(|r| r[f1].parse::<f64>().ok());
            let rx = left + cw * j as f64;
            let (fill, label, fg) = match value {
                Some(v) => (ramp(v), format!("{v:.3}"), text_color(v)),
                None => ("#cccccc".to_string(), "n/a".to_string(), "#000000"),
            };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{rx:.1}" y="{ry:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}" stroke="#ffffff"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{fg}">{label}</text>"##,
                rx + cw / 2.0,
                ry + ch / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Row-normalised confusion grid from a long-format confusion CSV.
pub fn confusion_svg(csv_text: &str, title: &str) -> Result<String, String> {
    let t = Table::parse(csv_text)?;
    let (gold, pred, count, frac) = (
        t.col("gold")?,
        t.col("predicted")?,
        t.col("count")?,
        t.col("row_fraction")?,
    );
    let labels = first_seen(t.rows.iter().map(|r| r[gold].clone()));
    let n = labels.len();
    let (cell, left, top) = (70.0, 90.0, 60.0);
    let w = left + cell * n as f64 + 20.0;
    let h = top + cell * n as f64 + 40.0;
    let mut s = String::new();
    header(&mut s, w, h, title);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="40" text-anchor="middle">predicted</text>"#,
        left + cell * n as f64 / 2.0
    );
    for (j, l) in labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text class="col-label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 6.0,
            esc(l)
        );
    }
    for (i, g) in labels.iter().enumerate() {
        let ry = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            ry + cell / 2.0 + 4.0,
            esc(g)
        );
        for (j, p) in labels.iter().enumerate() {
            let row = t.rows.iter().find(|r| &r[gold] == g && &r[pred] == p);
            let f = row.map_or(Ok(0.0), |r| parse_num(&r[frac], "row_fraction"))?;
            let c = row.map_or("0", |r| r[count].as_str());
            let rx = left + cell * j as f64;
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{rx:.1}" y="{ry:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}" stroke="#ffffff"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{}">{f:.2} ({})</text>"##,
                ramp(f),
                rx + cell / 2.0,
                ry + cell / 2.0 + 4.0,
                text_color(f),
                esc(c)
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn stance_color(label: &str) -> &'static str {
    match label {
        "Pro" => "#2ca02c",
        "Anti" => "#d62728",
        "Neutral" => "#7f7f7f",
        _ => "#1f77b4",
    }
}

/// Stacked horizontal bars of label shares per row of a stance table
/// (`key, <label columns...>, total`).
pub fn stance_bars_svg(csv_text: &str, title: &str) -> Result<String, String> {
    let t = Table::parse(csv_text)?;
    let total_col = t.col("total")?;
    let label_cols: Vec<usize> = (1..t.headers.len()).filter(|&c| c != total_col).collect();
    let (bar_w, bar_h, left, top) = (400.0, 24.0, 130.0, 40.0);
    let w = left + bar_w + 40.0;
    let h = top + (bar_h + 8.0) * t.rows.len() as f64 + 40.0;
    let mut s = String::new();
    header(&mut s, w, h, title);
    for (i, row) in t.rows.iter().enumerate() {
        let y = top + (bar_h + 8.0) * i as f64;
        let total = parse_num(&row[total_col], "total")?;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + bar_h / 2.0 + 4.0,
            esc(&row[0])
        );
        let mut x = left;
        for &c in &label_cols {
            let n = parse_num(&row[c], &t.headers[c])?;
            let share = if total > 0.0 { n / total } else { 0.0 };
            let width = bar_w * share;
            let _ = writeln!(
                s,
                r#"<rect class="segment" data-label="{}" x="{x:.1}" y="{y:.1}" width="{width:.1}" height="{bar_h:.1}" fill="{}"><title>{} {:.1}%</title></rect>"#,
                esc(&t.headers[c]),
                stance_color(&t.headers[c]),
                esc(&t.headers[c]),
                share * 100.0
            );
            x += width;
        }
    }
    let ly = h - 20.0;
    for (k, &c) in label_cols.iter().enumerate() {
        let lx = left + 110.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{ly:.1}">{}</text></g>"#,
            ly - 10.0,
            stance_color(&t.headers[c]),
            lx + 16.0,
            esc(&t.headers[c])
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Two aligned rows of token cells shaded by attention weight, on a shared scale.
pub fn heat_strip_svg(rows: &[(String, f64, f64)], names: [&str; 2]) -> String {
    let max = rows
        .iter()
        .flat_map(|(_, a, b)| [*a, *b])
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let (cell, left, top, ch) = (44.0, 110.0, 40.0, 26.0);
    let w = left + cell * rows.len() as f64 + 20.0;
    let h = top + 2.0 * ch + 90.0;
    let mut s = String::new();
    header(&mut s, w, h, "CLS attention (head average)");
    for (k, name) in names.iter().enumerate() {
        let y = top + ch * k as f64;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + ch / 2.0 + 4.0,
            esc(name)
        );
        for (i, (_, a, b)) in rows.iter().enumerate() {
            let v = if k == 0 { *a } else { *b };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{:.1}" y="{y:.1}" width="{cell:.1}" height="{ch:.1}" fill="{}" stroke="#ffffff"><title>{v:.4}</title></rect>"##,
                left + cell * i as f64,
                ramp(v / max)
            );
        }
    }
    let ty = top + 2.0 * ch + 10.0;
    for (i, (token, _, _)) in rows.iter().enumerate() {
        let x = left + cell * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text class="token" x="{x:.1}" y="{ty:.1}" text-anchor="end" transform="rotate(-60 {x:.1} {ty:.1})">{}</text>"#,
            esc(token)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn read_required(path: &Path) -> Result<String, PlotError> {
    if !path.is_file() {
        return Err(PlotError::MissingCsv(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

fn render(input: &Path, output: PathBuf, f: impl FnOnce(&str) -> Result<String, String>) -> Result<PathBuf, PlotError> {
    let text = read_required(input)?;
    let svg = f(&text).map_err(|message| PlotError::Malformed {
        file: input.to_path_buf(),
        message,
    })?;
    std::fs::write(&output, svg)?;
    Ok(output)
}

/// Dose-response chart, heatmap and one confusion grid per
/// `confusion_*.csv` of an ablation report directory.
pub fn emit_plots(report_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let dose = report_dir.join("dose_response.csv");
    let heat = report_dir.join("heatmap.csv");
    for required in [&dose, &heat] {
        if !required.is_file() {
            return Err(PlotError::MissingCsv(required.clone()));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = vec![
        render(&dose, out_dir.join("dose_response.svg"), dose_response_svg)?,
        render(&heat, out_dir.join("heatmap.svg"), heatmap_svg)?,
    ];
    let mut confusions: Vec<PathBuf> = std::fs::read_dir(report_dir)?
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("confusion") && n.ends_with(".csv"))
        })
        .collect();
    confusions.sort();
    for path in confusions {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("confusion")
            .to_string();
        files.push(render(&path, out_dir.join(format!("{stem}.svg")), |t| {
            confusion_svg(t, &stem)
        })?);
    }
    Ok(files)
}

/// Stacked stance bars per domain and per market from a corpus directory.
pub fn emit_stance_plots(corpus_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (name, title) in [
        ("stance_by_domain", "Stance distribution by domain"),
        ("stance_by_market", "Stance distribution by market"),
    ] {
        files.push(render(
            &corpus_dir.join(format!("{name}.csv")),
            out_dir.join(format!("{name}.svg")),
            |t| stance_bars_svg(t, title),
        )?);
    }
    Ok(files)
}
