//! Rendering of fit and analysis reports as text tables, CSV, JSON and SVG.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::econ::{EconReport, SubstitutionCurve};
use crate::error::{Error, Result};
use crate::evaluation::FitReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            "svg" => Ok(Self::Svg),
            other => Err(Error::config(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TableOptions {
    /// Print `|LL|` instead of the signed log-likelihood.
    pub absolute_log_likelihood: bool,
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Fit(&'a FitReport),
    Econ(&'a EconReport),
}

/// One rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub file_name: String,
    pub contents: String,
}

fn rendered(file_name: impl Into<String>, contents: String) -> Rendered {
    Rendered {
        file_name: file_name.into(),
        contents,
    }
}

/// File-name-safe form of a variable name.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn render(report: Report, format: ReportFormat, opts: TableOptions) -> Result<Vec<Rendered>> {
    match (report, format) {
        (Report::Fit(r), ReportFormat::Json) => Ok(vec![rendered("report.json", serde_json::to_string_pretty(r)?)]),
        (Report::Fit(r), ReportFormat::Csv) => Ok(vec![rendered("coefficients.csv", coefficients_csv(r)?)]),
        (Report::Fit(r), ReportFormat::Text) => Ok(vec![rendered("report.txt", fit_table(r, opts))]),
        (Report::Fit(_), ReportFormat::Svg) => Err(Error::NotCurveData),
        (Report::Econ(r), ReportFormat::Json) => Ok(vec![rendered("analysis.json", serde_json::to_string_pretty(r)?)]),
        (Report::Econ(r), ReportFormat::Csv) => econ_csv(r),
        (Report::Econ(r), ReportFormat::Text) => Ok(vec![rendered("analysis.txt", econ_text(r))]),
        (Report::Econ(r), ReportFormat::Svg) => {
            if r.substitution_curves.is_empty() {
                return Err(Error::NotCurveData);
            }
            Ok(r.substitution_curves
                .iter()
                .map(|c| rendered(format!("substitution_{}.svg", slug(&c.variable)), substitution_svg(c)))
                .collect())
        }
    }
}

/// Coefficient table with t-statistics in parentheses followed by the
/// goodness-of-fit rows.
pub fn fit_table(report: &FitReport, opts: TableOptions) -> String {
    let mut rows: Vec<(String, String)> = report
        .parameters
        .iter()
        .map(|p| {
            let t = match (p.std_error, p.t_stat) {
                (_, Some(t)) => format!(" ({t:.2})"),
                (None, None) if report.model_kind == crate::model::ModelKind::OrderedLogit => " (n/a)".to_owned(),
                _ => String::new(),
            };
            (p.name.clone(), format!("{:.4}{t}", p.value))
        })
        .collect();
    let ll = if opts.absolute_log_likelihood {
        report.log_likelihood.abs()
    } else {
        report.log_likelihood
    };
    let mut footer = vec![
        ("Number of parameters".to_owned(), report.n_params.to_string()),
        ("Log-likelihood".to_owned(), format!("{ll:.2}")),
    ];
    if let Some(loss) = report.training_loss {
        footer.push(("Training loss".to_owned(), format!("{loss:.2}")));
    }
    footer.push(("AIC".to_owned(), format!("{:.2}", report.aic)));
    footer.push((
        "Validation accuracy".to_owned(),
        report
            .validation_accuracy
            .map_or_else(|| "n/a".to_owned(), |a| format!("{:.2}%", a * 100.0)),
    ));
    footer.push(("Observations".to_owned(), report.n_observations.to_string()));

    let width = rows
        .iter()
        .chain(&footer)
        .map(|(n, _)| n.chars().count())
        .max()
        .unwrap_or(0)
        .max(9);
    let value_width = rows.iter().chain(&footer).map(|(_, v)| v.len()).max().unwrap_or(0).max(8);
    let rule = "-".repeat(width + 2 + value_width);
    let mut out = String::new();
    let kind = match report.model_kind {
        crate::model::ModelKind::OrderedLogit => "Ordered logit",
        crate::model::ModelKind::OrdinalReslogit => "Ordinal-ResLogit",
    };
    let _ = writeln!(out, "{kind}");
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{:<width$}  {:>value_width$}", "Parameter", "Estimate");
    let _ = writeln!(out, "{rule}");
    for (n, v) in rows.drain(..) {
        let _ = writeln!(out, "{n:<width$}  {v:>value_width$}");
    }
    let _ = writeln!(out, "{rule}");
    for (n, v) in footer {
        let _ = writeln!(out, "{n:<width$}  {v:>value_width$}");
    }
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "t-statistics in parentheses.");
    if opts.absolute_log_likelihood {
        let _ = writeln!(out, "Log-likelihood shown as an absolute value.");
    }
    for c in &report.caveats {
        let _ = writeln!(out, "Note: {c}");
    }
    out
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn coefficients_csv(report: &FitReport) -> Result<String> {
    csv_string(
        &["parameter", "estimate", "std_error", "t_stat"],
        report
            .parameters
            .iter()
            .map(|p| vec![p.name.clone(), p.value.to_string(), opt(p.std_error), opt(p.t_stat)]),
    )
}

pub fn market_share_csv(report: &EconReport) -> Result<String> {
    let rows = report.market_shares.iter().flat_map(|m| {
        let mode = serde_json::to_value(m.mode).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        m.shares
            .iter()
            .enumerate()
            .map(move |(k, s)| vec![(k + 1).to_string(), mode.clone(), s.to_string()])
            .collect::<Vec<_>>()
    });
    csv_string(&["category", "mode", "share"], rows)
}

/// Long-format curve table: one row per grid value and category.
pub fn substitution_csv(curve: &SubstitutionCurve) -> Result<String> {
    let rows = curve.grid.iter().zip(&curve.probs).flat_map(|(v, p)| {
        p.iter()
            .enumerate()
            .map(|(k, prob)| vec![curve.variable.clone(), v.to_string(), (k + 1).to_string(), prob.to_string()])
            .collect::<Vec<_>>()
    });
    csv_string(&["variable", "value", "category", "probability"], rows)
}

pub fn crossings_csv(report: &EconReport) -> Result<String> {
    let rows = report.substitution_curves.iter().flat_map(|c| {
        c.crossings
            .iter()
            .map(|x| vec![c.variable.clone(), x.first.to_string(), x.second.to_string(), x.value.to_string()])
            .collect::<Vec<_>>()
    });
    csv_string(&["variable", "first_category", "second_category", "value"], rows)
}

pub fn elasticity_csv(report: &EconReport) -> Result<String> {
    let rows = report.elasticities.iter().flat_map(|e| {
        e.aggregate
            .iter()
            .zip(&e.excluded)
            .enumerate()
            .map(|(k, (v, x))| vec![e.variable.clone(), (k + 1).to_string(), v.to_string(), x.to_string()])
            .collect::<Vec<_>>()
    });
    csv_string(&["variable", "category", "elasticity", "excluded"], rows)
}

pub fn binary_effect_csv(report: &EconReport) -> Result<String> {
    let rows = report.binary_effects.iter().flat_map(|b| {
        (0..b.mean_change.len())
            .map(|k| {
                let pick = |v: &Option<Vec<f64>>| v.as_ref().map_or_else(String::new, |v| v[k].to_string());
                vec![
                    b.variable.clone(),
                    (k + 1).to_string(),
                    b.mean_change[k].to_string(),
                    pick(&b.from_zero),
                    pick(&b.from_one),
                    opt(b.expected_value_change),
                ]
            })
            .collect::<Vec<_>>()
    });
    csv_string(
        &["variable", "category", "mean_change", "change_from_zero", "change_from_one", "expected_value_change"],
        rows,
    )
}

fn econ_csv(report: &EconReport) -> Result<Vec<Rendered>> {
    let mut out = Vec::new();
    if report.market_shares.is_some() {
        out.push(rendered("market_shares.csv", market_share_csv(report)?));
    }
    for c in &report.substitution_curves {
        out.push(rendered(format!("substitution_{}.csv", slug(&c.variable)), substitution_csv(c)?));
    }
    if !report.substitution_curves.is_empty() {
        out.push(rendered("crossings.csv", crossings_csv(report)?));
    }
    out.push(rendered("elasticities.csv", elasticity_csv(report)?));
    if !report.binary_effects.is_empty() {
        out.push(rendered("binary_effects.csv", binary_effect_csv(report)?));
    }
    Ok(out)
}

fn percent_row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{:>8.2}%", v * 100.0)).collect::<Vec<_>>().join(" ")
}

pub fn econ_text(report: &EconReport) -> String {
    let mut out = String::new();
    if let Some(m) = &report.market_shares {
        let mode = match m.mode {
            crate::econ::ShareMode::Hard => "predicted choices",
            crate::econ::ShareMode::Soft => "mean probabilities",
        };
        let _ = writeln!(out, "Market shares ({mode})");
        let _ = writeln!(out, "  {}", percent_row(&m.shares));
    }
    for e in &report.elasticities {
        let _ = writeln!(out, "Aggregate elasticity of {}", e.variable);
        for (k, v) in e.aggregate.iter().enumerate() {
            let _ = writeln!(out, "  category {}: {v:.4}", k + 1);
        }
    }
    for b in &report.binary_effects {
        let _ = writeln!(out, "Effect of switching {}", b.variable);
        let _ = writeln!(out, "  all:       {}", percent_row(&b.mean_change));
        if let Some(z) = &b.from_zero {
            let _ = writeln!(out, "  0 -> 1:    {}", percent_row(z));
        }
        if let Some(o) = &b.from_one {
            let _ = writeln!(out, "  1 -> 0:    {}", percent_row(o));
        }
        if let (Some(d), Some(base)) = (b.expected_value_change, b.expected_value_before) {
            let rel = if base != 0.0 { format!(" ({:+.2}%)", d / base * 100.0) } else { String::new() };
            let _ = writeln!(out, "  expected value change: {d:+.4}{rel}");
        }
    }
    for c in &report.substitution_curves {
        let _ = writeln!(out, "Substitution curve over {} ({} points)", c.variable, c.grid.len());
        for x in &c.crossings {
            let _ = writeln!(out, "  categories {} and {} cross at {:.4}", x.first, x.second, x.value);
        }
    }
    if let Some(r) = &report.representatives {
        let list = r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "Representative values: {list}");
    }
    for n in &report.notes {
        let _ = writeln!(out, "Note: {n}");
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Static line chart with one series per category.
pub fn substitution_svg(curve: &SubstitutionCurve) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 130.0, 20.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let lo = curve.grid.first().copied().unwrap_or(0.0);
    let hi = curve.grid.last().copied().unwrap_or(1.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let sx = |v: f64| left + (v - lo) / span * plot_w;
    let sy = |p: f64| top + (1.0 - p) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = sy(p);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{p:.1}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    for i in 0..=4 {
        let v = lo + span * i as f64 / 4.0;
        let x = sx(v);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"#,
            top + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        h - 10.0,
        xml_escape(&curve.variable)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">Choice probability</text>"#,
        top + plot_h / 2.0
    );
    let k = curve.probs.first().map_or(0, Vec::len);
    for c in 0..k {
        let color = PALETTE[c % PALETTE.len()];
        let points: Vec<String> = curve
            .grid
            .iter()
            .zip(&curve.probs)
            .map(|(v, p)| format!("{:.2},{:.2}", sx(*v), sy(p[c])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 + 18.0 * c as f64;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">Category {}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            c + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ParamEstimate;
    use crate::model::ModelKind;

    fn sample_report() -> FitReport {
        FitReport {
            model_kind: ModelKind::OrderedLogit,
            parameters: vec![
                ParamEstimate { name: "age".into(), value: 0.5, std_error: Some(0.1), t_stat: Some(5.0) },
                ParamEstimate { name: "Threshold1".into(), value: -1.0, std_error: None, t_stat: None },
            ],
            log_likelihood: -1193.68,
            training_loss: None,
            n_params: 16,
            aic: 2419.36,
            validation_accuracy: Some(0.8189),
            n_observations: 100,
            n_validation: Some(20),
            clamped_observations: 0,
            caveats: vec![],
        }
    }

    #[test]
    fn table_rows() {
        let r = sample_report();
        let text = fit_table(&r, TableOptions::default());
        for row in ["Log-likelihood", "AIC", "Validation accuracy", "(5.00)", "(n/a)", "81.89%", "-1193.68"] {
            assert!(text.contains(row), "missing {row}");
        }
        let abs = fit_table(&r, TableOptions { absolute_log_likelihood: true });
        assert!(abs.contains(" 1193.68") && !abs.contains("-1193.68"));
    }

    #[test]
    fn empty_elasticity_csv_has_header() {
        let csv = elasticity_csv(&EconReport::default()).unwrap();
        assert_eq!(csv, "variable,category,elasticity,excluded\n");
    }

    #[test]
    fn svg_only_for_curves() {
        let r = sample_report();
        assert!(matches!(render(Report::Fit(&r), ReportFormat::Svg, TableOptions::default()), Err(Error::NotCurveData)));
        let empty = EconReport::default();
        assert!(render(Report::Econ(&empty), ReportFormat::Svg, TableOptions::default()).is_err());
        let curve = SubstitutionCurve {
            variable: "age".into(),
            grid: vec![0.0, 1.0],
            probs: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            crossings: vec![],
        };
        let with = EconReport { substitution_curves: vec![curve], ..Default::default() };
        let files = render(Report::Econ(&with), ReportFormat::Svg, TableOptions::default()).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].contents.matches("<polyline").count(), 2);
    }
}
