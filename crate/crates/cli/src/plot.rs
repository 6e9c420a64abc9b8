//! SVG line charts of the CSV artifacts.

use std::error::Error;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

type Series = (String, Vec<(f64, f64)>);

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, Box<dyn Error>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    if header.len() < 2 || rows.is_empty() {
        return Err("need a time column, one data column and at least one row".into());
    }
    Ok(Table { header, rows })
}

fn column(t: &Table, name: &str) -> Option<usize> {
    t.header.iter().position(|h| h == name)
}

/// Splits a table into labelled series; the flag asks for a log y axis.
fn series(t: &Table) -> (Vec<Series>, bool) {
    if let (Some(x), Some(y), Some(z), Some(c)) =
        (column(t, "x"), column(t, "y"), column(t, "z"), column(t, "c"))
    {
        let mut out: Vec<([f64; 3], Series)> = Vec::new();
        for r in &t.rows {
            let p = [r[x], r[y], r[z]];
            let idx = match out.iter().position(|(q, _)| *q == p) {
                Some(i) => i,
                None => {
                    out.push((p, (format!("({}, {}, {}) um", p[0], p[1], p[2]), Vec::new())));
                    out.len() - 1
                }
            };
            out[idx].1 .1.push((r[0], r[c]));
        }
        return (out.into_iter().map(|(_, s)| s).collect(), false);
    }
    let receiver = column(t, "eta_b").is_some();
    let cols: Vec<usize> = (1..t.header.len())
        .filter(|&i| !receiver || t.header[i].starts_with("c_"))
        .collect();
    let out = cols
        .iter()
        .map(|&i| {
            let pts = t
                .rows
                .iter()
                .map(|r| (r[0], r[i]))
                .filter(|&(_, v)| !receiver || v > 0.0)
                .collect();
            (t.header[i].clone(), pts)
        })
        .collect();
    (out, receiver)
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + y0.abs().max(1.0);
    }
    (x0, x1, y0, y1)
}

/// Renders `csv` to `<dir>/<stem>.svg` and returns the image path.
pub fn render(csv: &Path, dir: &Path) -> Result<PathBuf, Box<dyn Error>> {
    let table = read_table(csv)?;
    let (series, log_y) = series(&table);
    let stem = csv.file_stem().ok_or("no file name")?.to_string_lossy();
    std::fs::create_dir_all(dir)?;
    let out = dir.join(format!("{stem}.svg"));
    let (x0, x1, y0, y1) = bounds(&series);
    let root = SVGBackend::new(&out, (960, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(stem.as_ref(), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(80);
    let colors = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(table.header[0].as_str())
                .y_label_formatter(&|v| format!("{v:.3e}"))
                .draw()?;
            for (i, (label, pts)) in series.iter().enumerate() {
                let color = colors[i % colors.len()];
                chart
                    .draw_series(LineSeries::new(pts.iter().cloned(), color))?
                    .label(label.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()?;
        }};
    }
    if log_y {
        let lo = y0.max(y1 * 1e-30);
        draw!(builder.build_cartesian_2d(x0..x1, (lo..y1 * 1.5).log_scale())?);
    } else {
        let pad = 0.05 * (y1 - y0);
        draw!(builder.build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))?);
    }
    root.present()?;
    drop(root);
    Ok(out)
}
