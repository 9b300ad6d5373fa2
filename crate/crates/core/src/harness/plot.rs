use std::fmt::Write as _;
use std::path::Path;

use super::export::{parse_constellation_csv, parse_results_csv, read_file, write_file, CONSTELLATION_HEADER, RESULTS_HEADER};
use super::Error;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="30" text-anchor="middle">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

/// A named error-rate curve set read from one results CSV.
pub struct Series {
    pub name: String,
    pub ebn0: Vec<f64>,
    pub ber: Vec<f64>,
    pub bler: Vec<f64>,
}

/// Semilog-y BER (solid) and BLER (dashed) against Eb/N0.
pub fn error_rate_svg(series: &[Series]) -> Result<String, Error> {
    let all_x: Vec<f64> = series.iter().flat_map(|s| s.ebn0.iter().copied()).collect();
    if all_x.is_empty() {
        return Err(Error::Contract("nothing to plot".into()));
    }
    let positive: Vec<f64> = series
        .iter()
        .flat_map(|s| s.ber.iter().chain(&s.bler).copied())
        .filter(|v| *v > 0.0)
        .collect();
    let (x0, x1) = all_x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
    let lo = positive.iter().copied().fold(1.0, f64::min).log10().floor().min(-1.0);
    let hi = positive.iter().copied().fold(1e-300, f64::max).log10().ceil().max(lo + 1.0).min(0.0);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |v: f64| PAD + (hi - v.log10()) / (hi - lo) * (H - 2.0 * PAD);

    let mut s = open("Error rate vs Eb/N0");
    let mut d = lo;
    while d <= hi {
        let y = py(10f64.powf(d));
        writeln!(s, r##"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, W - PAD).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#, PAD - 5.0, y + 4.0).unwrap();
        d += 1.0;
    }
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x:.2}</text>"#, px(x), H - PAD + 18.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Eb/N0 [dB]</text>"#, W / 2.0, H - 15.0).unwrap();

    let mut legend = 0;
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (what, ys, dash) in [("BER", &ser.ber, ""), ("BLER", &ser.bler, r#" stroke-dasharray="6,3""#)] {
            let pts: Vec<String> = ser
                .ebn0
                .iter()
                .zip(ys.iter())
                .filter(|(_, v)| **v > 0.0)
                .map(|(x, v)| format!("{:.2},{:.2}", px(*x), py(*v)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                pts.join(" ")
            )
            .unwrap();
            let ly = PAD + 15.0 + 16.0 * legend as f64;
            writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                W - PAD - 150.0,
                W - PAD - 125.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}">{} {what}</text>"#,
                W - PAD - 120.0,
                ly + 4.0,
                escape(&ser.name)
            )
            .unwrap();
            legend += 1;
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Scatter of labeled points.
pub fn constellation_svg(points: &[(String, num_complex::Complex64)]) -> Result<String, Error> {
    if points.is_empty() {
        return Err(Error::Contract("nothing to plot".into()));
    }
    let r = points
        .iter()
        .map(|(_, p)| p.re.abs().max(p.im.abs()))
        .fold(0.0, f64::max)
        .max(1e-9)
        * 1.15;
    let side = H - 2.0 * PAD;
    let left = (W - side) / 2.0;
    let px = |x: f64| left + (x + r) / (2.0 * r) * side;
    let py = |y: f64| PAD + (r - y) / (2.0 * r) * side;
    let mut s = open(&format!("Constellation ({} points)", points.len()));
    writeln!(s, r##"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ccc"/>"##, py(0.0), left + side, py(0.0)).unwrap();
    writeln!(s, r##"<line x1="{:.2}" y1="{PAD}" x2="{:.2}" y2="{:.2}" stroke="#ccc"/>"##, px(0.0), px(0.0), PAD + side).unwrap();
    for (label, p) in points {
        writeln!(s, r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"/>"##, px(p.re), py(p.im)).unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
            px(p.re),
            py(p.im) - 6.0,
            escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders results CSVs (one curve pair each) or a single constellation CSV
/// to an SVG file. Nothing is written if any input fails to parse.
pub fn emit_plot(inputs: &[&Path], out: &Path) -> Result<(), Error> {
    if inputs.is_empty() {
        return Err(Error::Contract("no input files".into()));
    }
    let texts: Vec<String> = inputs.iter().map(|p| read_file(p)).collect::<Result<_, _>>()?;
    let first = texts[0].lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    let svg = if first == CONSTELLATION_HEADER {
        if texts.len() != 1 {
            return Err(Error::Contract("plot one constellation at a time".into()));
        }
        constellation_svg(&parse_constellation_csv(&texts[0])?)?
    } else if first == RESULTS_HEADER || texts.len() > 1 {
        let mut series = Vec::new();
        for (path, text) in inputs.iter().zip(&texts) {
            let rows = parse_results_csv(text)?;
            series.push(Series {
                name: path.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned()),
                ebn0: rows.iter().map(|r| r.ebn0_db).collect(),
                ber: rows.iter().map(|r| r.ber).collect(),
                bler: rows.iter().map(|r| r.bler).collect(),
            });
        }
        error_rate_svg(&series)?
    } else {
        // reports the header or emptiness problem with its row number
        parse_results_csv(&texts[0])?;
        unreachable!("a valid results file starts with the results header")
    };
    write_file(out, &svg)
}
