use std::io::Write;

use serde::Serialize;

use super::experiments::{CorrelationSweep, HeatCell, InteractionOnlyCurve, LambdaSweep};
use crate::error::{Error, Result};

fn write_rows<W: Write, R: Serialize>(out: W, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Analysis(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Analysis(format!("csv: {e}")))
}

/// One row per `(target, c, p_relax)` sweep point.
pub fn correlation_csv<W: Write>(sweep: &CorrelationSweep, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        source: &'a str,
        target: &'a str,
        c: f64,
        p_relax: f64,
        mean_interaction: f64,
        mean_transfer_utility: f64,
        examples: usize,
    }
    write_rows(
        out,
        sweep.points.iter().map(|p| Row {
            source: &sweep.source_id,
            target: &p.target_id,
            c: p.c,
            p_relax: p.p_relax,
            mean_interaction: p.mean_interaction,
            mean_transfer_utility: p.mean_transfer_utility,
            examples: p.examples,
        }),
    )
}

/// One row per `(lambda, target)`.
pub fn lambda_csv<W: Write>(sweep: &LambdaSweep, out: W) -> Result<()> {
    write_rows(out, &sweep.rows)
}

/// One row per `(target, epoch)`, then a `noise` row per target.
pub fn curve_csv<W: Write>(curve: &InteractionOnlyCurve, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        target: &'a str,
        epoch: String,
        success_rate: f64,
    }
    let mut rows = Vec::new();
    for t in &curve.targets {
        for (epoch, rate) in curve.epochs.iter().zip(&t.success_by_epoch) {
            rows.push(Row {
                target: &t.target_id,
                epoch: epoch.to_string(),
                success_rate: *rate,
            });
        }
        rows.push(Row {
            target: &t.target_id,
            epoch: "noise".into(),
            success_rate: t.noise_success_rate,
        });
    }
    write_rows(out, rows)
}

/// `row,col,value` per grid cell.
pub fn heatmap_csv<W: Write>(cells: &[HeatCell], out: W) -> Result<()> {
    write_rows(out, cells)
}
