use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SummaryRow;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            _ => Err(Error::Parameter(format!("unknown format '{s}'"))),
        }
    }
}

pub const CSV_HEADER: [&str; 22] = [
    "point_id",
    "model",
    "score",
    "n",
    "m",
    "p",
    "rho",
    "delta",
    "trials",
    "skipped",
    "partial_successes",
    "partial_rate",
    "partial_lo",
    "partial_hi",
    "exact_successes",
    "exact_rate",
    "exact_lo",
    "exact_hi",
    "mean_overlap",
    "threshold",
    "threshold_ratio",
    "note",
];

/// Shortest `%.17g`-style rendering: 17 significant digits, trailing zeros
/// removed, exponent form outside `[1e-4, 1e17)`.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn csv_record(r: &SummaryRow) -> [String; 22] {
    [
        r.point_id.to_string(),
        r.model.as_str().into(),
        r.score.as_str().into(),
        r.n.to_string(),
        r.m.to_string(),
        opt(r.p),
        fmt_real(r.rho),
        fmt_real(r.delta),
        r.trials.to_string(),
        r.skipped.to_string(),
        r.partial_successes.to_string(),
        fmt_real(r.partial_rate),
        fmt_real(r.partial_lo),
        fmt_real(r.partial_hi),
        r.exact_successes.to_string(),
        fmt_real(r.exact_rate),
        fmt_real(r.exact_lo),
        fmt_real(r.exact_hi),
        fmt_real(r.mean_overlap),
        opt(r.threshold),
        opt(r.threshold_ratio),
        r.note.clone(),
    ]
}

fn to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(csv_record(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Resource(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
}

/// Parses CSV written by [`emit`].
pub fn read_csv_rows(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn heat(v: f64) -> String {
    // white -> dark blue
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

fn to_svg(rows: &[SummaryRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Parameter("an SVG scatter needs at least one row".into()));
    }
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let ms = rows.iter().map(|r| r.m as f64);
    let (m_lo, m_hi) = ms.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (r_lo, r_hi) = rows
        .iter()
        .map(|r| r.rho)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let sx = |m: f64| pad + if m_hi > m_lo { (m - m_lo) / (m_hi - m_lo) } else { 0.5 } * (w - 2.0 * pad);
    let sy = |r: f64| h - pad - if r_hi > r_lo { (r - r_lo) / (r_hi - r_lo) } else { 0.5 } * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">m</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">rho</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle">exact recovery rate</text>"#, w / 2.0);
    for r in rows {
        let (x, y) = (sx(r.m as f64), sy(r.rho));
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="9" fill="{}" stroke="black" stroke-width="0.5"><title>m={} rho={} exact={} partial={}</title></circle>"#,
            heat(r.exact_rate),
            r.m,
            fmt_real(r.rho),
            fmt_real(r.exact_rate),
            fmt_real(r.partial_rate)
        );
    }
    let mut ticks: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for m in ticks {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{m}</text>"#, sx(m as f64), h - pad + 18.0);
    }
    let mut rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    rhos.sort_unstable_by(f64::total_cmp);
    rhos.dedup();
    for r in rhos {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, pad - 6.0, sy(r) + 4.0, fmt_real(r));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders rows in the given format.
pub fn emit_to_string(rows: &[SummaryRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => to_csv(rows),
        OutputFormat::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        OutputFormat::Svg => to_svg(rows),
    }
}

/// Writes rows to `path`.
pub fn emit(rows: &[SummaryRow], format: OutputFormat, path: &Path) -> Result<()> {
    let text = emit_to_string(rows, format)?;
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::ScoreKind;
    use crate::model::ModelKind;

    fn row(id: usize) -> SummaryRow {
        SummaryRow {
            point_id: id,
            model: ModelKind::ErdosRenyi,
            score: ScoreKind::Product,
            n: 8,
            m: 4,
            p: Some(0.3),
            rho: 0.1,
            delta: 0.5,
            trials: 3,
            skipped: 1,
            partial_successes: 1,
            partial_rate: 1.0 / 3.0,
            partial_lo: 0.06,
            partial_hi: 0.79,
            exact_successes: 0,
            exact_rate: 0.0,
            exact_lo: 0.0,
            exact_hi: 0.56,
            mean_overlap: 0.25,
            threshold: None,
            threshold_ratio: Some(1e-20 / 3.0),
            note: "budget, \"quoted\"".into(),
        }
    }

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(0.5), "0.5");
        assert_eq!(fmt_real(0.1), "0.10000000000000001");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(-2.5e-7), "-2.4999999999999999e-7");
        assert_eq!(fmt_real(-2.5e-4), "-0.00025000000000000001");
        assert_eq!(fmt_real(1e20), "1e20");
        for x in [1.0 / 3.0, std::f64::consts::PI * 1e-9, 123456.789, 6.02e23, -1e-300] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_roundtrip_and_header_only() {
        let rows = vec![row(0), row(1)];
        let text = emit_to_string(&rows, OutputFormat::Csv).unwrap();
        assert!(text.starts_with("point_id,model,score,n,m,p,rho"));
        assert_eq!(read_csv_rows(&text).unwrap(), rows);
        let empty = emit_to_string(&[], OutputFormat::Csv).unwrap();
        assert_eq!(empty.lines().count(), 1);
        assert!(read_csv_rows(&empty).unwrap().is_empty());
    }

    #[test]
    fn json_and_svg() {
        let rows = vec![row(0)];
        let text = emit_to_string(&rows, OutputFormat::Json).unwrap();
        let back: Vec<SummaryRow> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rows);
        let svg = emit_to_string(&rows, OutputFormat::Svg).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<circle"));
        assert!(emit_to_string(&[], OutputFormat::Svg).is_err());
    }

    #[test]
    fn io_errors_carry_the_path() {
        let e = emit(&[], OutputFormat::Csv, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
