//! Static SVG line plots read back from result CSVs.

use std::path::Path;

use plotters::prelude::*;

const COLORS: [RGBColor; 5] = [BLACK, RED, BLUE, GREEN, MAGENTA];

/// Table columns loaded from a CSV with a header row.
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, String> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let headers: Vec<String> = rd
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for rec in rd.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                col.push(field.parse::<f64>().map_err(|e| format!("{field:?}: {e}"))?);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }
}

/// Plots the named `y` columns of `csv` against its `x` column.
pub fn plot_csv(csv: &Path, svg: &Path, x: &str, ys: &[&str], title: &str) -> Result<(), String> {
    let table = Table::read(csv)?;
    let xs = table.column(x).ok_or_else(|| format!("no column {x} in {}", csv.display()))?;
    let series: Vec<(&str, &[f64])> = ys
        .iter()
        .map(|&y| {
            table
                .column(y)
                .map(|c| (y, c))
                .ok_or_else(|| format!("no column {y} in {}", csv.display()))
        })
        .collect::<Result<_, _>>()?;
    if xs.is_empty() {
        return Err(format!("{} has no rows", csv.display()));
    }
    let (x0, x1) = bounds(xs.iter());
    let (y0, y1) = bounds(series.iter().flat_map(|(_, c)| c.iter()));

    let root = SVGBackend::new(svg, (720, 480)).into_drawing_area();
    let err = |e: DrawingAreaErrorKind<_>| e.to_string();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(err)?;
    chart.configure_mesh().x_desc(x).draw().map_err(err)?;
    for (k, (name, col)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        chart
            .draw_series(LineSeries::new(xs.iter().copied().zip(col.iter().copied()), color.stroke_width(2)))
            .map_err(err)?
            .label(*name)
            .legend(move |(px, py)| PathElement::new([(px, py), (px + 20, py)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1e-12);
        return (lo - pad, hi + pad);
    }
    let pad = 0.02 * (hi - lo);
    (lo - pad, hi + pad)
}
