//! CSV and line-delimited JSON writers for analytics outputs. Units are
//! spelled out in each header row.

use std::io::Write;

use super::{CountSeries, DensityGrid, PlotPoint};

/// Rows are space bins (lower mile marker edge), columns are time bins
/// (window start, seconds); cells are vehicles per mile.
pub fn write_density_csv<W: Write>(grid: &DensityGrid, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let spec = &grid.spec;
    let mut header = vec!["mm_lo_mi".to_string()];
    header.extend((0..spec.n_t).map(|j| format!("veh_per_mi@t_lo_s={}", spec.t_edge(j))));
    w.write_record(&header)?;
    for (i, row) in grid.cells.iter().enumerate() {
        let mut rec = vec![format!("{}", round_edge(spec.x_edge(i)))];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_counts_csv<W: Write>(series: &CountSeries, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_start_s", "on_vehicles", "on_testbed_vehicles", "engaged_westbound_vehicles"])?;
    for k in 0..series.len() {
        w.write_record([
            format!("{}", series.window_start(k)),
            series.on[k].to_string(),
            series.on_testbed[k].to_string(),
            series.engaged_westbound[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First line is a units header object, then one point per line.
pub fn write_plot_jsonl<W: Write>(points: &[PlotPoint], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        r#"{{"units":{{"t":"s","mile_marker":"mi","color":"commanded speed m/s, or \"gray\" when not engaged"}}}}"#
    )?;
    for p in points {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Removes representation noise such as 0.30000000000000004.
fn round_edge(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}
