use declab_core::harness::{fit_slope, predicted_exponent, DecouplingReport, Metric, ScenarioKind};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub log_n: f64,
    pub log_ratio: f64,
    /// Half-width of the error bar in log space, `se / ratio`.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub kind: String,
    pub p: f64,
    pub metric: Metric,
    pub points: Vec<PlotPoint>,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlotData {
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

fn base_kind(kind: &str) -> Option<ScenarioKind> {
    kind.split('/').next()?.parse().ok()
}

/// `(log N, log ratio)` series per scenario kind and `p`, in the metric the
/// scenario's prediction refers to. Rows without a positive finite ratio are
/// dropped with a note.
pub fn emit_plotdata(reports: &[DecouplingReport]) -> PlotData {
    let mut keys: Vec<(&str, f64)> = Vec::new();
    for r in reports {
        if !keys.iter().any(|&(k, p)| k == r.kind && p == r.p) {
            keys.push((&r.kind, r.p));
        }
    }
    let mut out = PlotData::default();
    for (kind, p) in keys {
        let prediction = base_kind(kind).map(|k| predicted_exponent(k, p));
        let metric = prediction.map_or(Metric::RatioLp, |pr| pr.metric);
        let mut pts = Vec::new();
        for r in reports.iter().filter(|r| r.kind == kind && r.p == p) {
            match r.metric(metric) {
                Some((v, se)) if v > 0.0 && v.is_finite() => pts.push((r.n, v, se)),
                _ => out.notes.push(format!("{kind} N={} p={p}: no finite {metric:?}, row skipped", r.n)),
            }
        }
        let fit = fit_slope(&pts).ok();
        out.series.push(Series {
            kind: kind.to_string(),
            p,
            metric,
            points: pts
                .iter()
                .map(|&(n, v, se)| PlotPoint { log_n: n.ln(), log_ratio: v.ln(), err: se.map(|s| s / v) })
                .collect(),
            slope: fit.map(|f| f.0),
            slope_se: fit.and_then(|f| f.1),
            ci95: fit.and_then(|(s, se)| se.map(|se| [s - 1.96 * se, s + 1.96 * se])),
            predicted: prediction.map(|pr| pr.exponent),
        });
    }
    out
}
