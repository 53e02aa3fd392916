//! Plot-ready CSV tables.

use std::fs;

use flashover_core::boosting::BoostedModel;
use flashover_core::evaluation::SweepReport;
use flashover_core::features::analyze;
use flashover_core::matrix::FeatureMatrix;
use flashover_core::mrmr::RankingReport;
use flashover_core::{Error, Result, Waveform};

use crate::commands::Context;
use crate::ReportArgs;

pub const SWEEP_TABLE: &str = "report_sweep.csv";
pub const WAVEFORM_PLOT: &str = "plot_waveform.csv";
pub const RANKING_TABLE: &str = "report_ranking.csv";
pub const PREDICTION_PLOT: &str = "plot_predictions.csv";

/// One row per feature count, one column per (model, condition).
pub fn sweep_table(r: &SweepReport) -> String {
    let mut columns: Vec<(String, Option<flashover_core::Condition>)> = Vec::new();
    let mut counts = Vec::new();
    for row in &r.rows {
        if !columns
            .iter()
            .any(|(m, c)| *m == row.model && *c == row.condition)
        {
            columns.push((row.model.clone(), row.condition));
        }
        if !counts.contains(&row.feature_count) {
            counts.push(row.feature_count);
        }
    }
    let mut out = String::from("feature_count");
    for (m, c) in &columns {
        match c {
            Some(c) => out.push_str(&format!(",{m}:{c}")),
            None => out.push_str(&format!(",{m}")),
        }
    }
    out.push('\n');
    for count in counts {
        out.push_str(&count.to_string());
        for (m, c) in &columns {
            match r.find(count, m, *c) {
                Some(row) => out.push_str(&format!(",{}", row.value)),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn waveform_plot(w: &Waveform, ctx: &Context) -> Result<String> {
    let a = analyze(w, &ctx.manifest.dsp)?;
    let mut in_pulse = vec![false; w.len()];
    for p in &a.ma.pulses {
        in_pulse[p.start_index..=p.end_index]
            .iter_mut()
            .for_each(|v| *v = true);
    }
    let mut out = String::from("t_s,raw_ma,ma_filtered_ma,fundamental_ma,residual_ma,in_pulse\n");
    #[allow(clippy::needless_range_loop)]
    for i in 0..w.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            w.time_of(i),
            w.samples()[i],
            a.ma.filtered.samples()[i],
            a.ma.fundamental.reconstructed[i],
            a.ma.residual.samples()[i],
            in_pulse[i] as u8
        ));
    }
    Ok(out)
}

fn ranking_table(r: &RankingReport) -> String {
    let mut out = String::from("rank,id,score,relevance\n");
    for (i, f) in r.ranked.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, f.id, f.score, f.relevance));
    }
    out
}

fn prediction_plot(m: &FeatureMatrix, model: &BoostedModel) -> Result<String> {
    let p = model.predict_matrix(m)?;
    let mut out = String::from("row,condition,actual_pct_u50,actual_condition_label,prediction\n");
    for (i, (l, v)) in m.labels().iter().zip(&p).enumerate() {
        let cond = l.condition.map_or(String::new(), |c| c.to_string());
        let pct = l.pct_u50.map_or(String::new(), |x| x.to_string());
        let label = l
            .condition
            .map_or(String::new(), |c| c.as_label().to_string());
        out.push_str(&format!("{i},{cond},{pct},{label},{v}\n"));
    }
    Ok(out)
}

pub fn run(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let mut wrote = Vec::new();
    if let Some(p) = &a.sweep {
        let r = SweepReport::from_json(&fs::read_to_string(p)?)?;
        wrote.push(ctx.write(SWEEP_TABLE, &sweep_table(&r))?);
    }
    if let Some(p) = &a.waveform {
        wrote.push(ctx.write(WAVEFORM_PLOT, &waveform_plot(&Waveform::load(p)?, ctx)?)?);
    }
    if let Some(p) = &a.ranking {
        let r: RankingReport = serde_json::from_str(&fs::read_to_string(p)?)?;
        wrote.push(ctx.write(RANKING_TABLE, &ranking_table(&r))?);
    }
    if let (Some(m), Some(model)) = (&a.matrix, &a.model) {
        let text = prediction_plot(&FeatureMatrix::load(m)?, &BoostedModel::load(model)?)?;
        wrote.push(ctx.write(PREDICTION_PLOT, &text)?);
    }
    if wrote.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to report; pass --sweep, --waveform, --ranking or --matrix/--model".into(),
        ));
    }
    for p in wrote {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
