//! Plain SVG emitters. Each series also carries its numbers in `data-*`
//! attributes (shortest round-trip formatting) so plots can be checked
//! against the CSVs they were drawn from.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{EvalRegime, SummaryRow};
use crate::agents::Algorithm;
use crate::error::{invalid, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn color(alg: Algorithm) -> &'static str {
    match alg {
        Algorithm::Clac => "#1f77b4",
        Algorithm::Sac => "#d62728",
        Algorithm::Mirl => "#2ca02c",
    }
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        Self {
            x: pad(x),
            y: pad(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str, x_ticks: bool) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            svg,
            r#"<g class="axes" stroke="black" fill="none"><path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}"/></g>"#
        );
        let _ = writeln!(
            svg,
            r#"<g class="ticks" font-size="11" font-family="sans-serif">"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.1}</text>"#,
                x0 - 6.0,
                self.py(yv) + 4.0,
                yv
            );
            if x_ticks {
                let xv = self.x.0 + f * (self.x.1 - self.x.0);
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.0}</text>"#,
                    self.px(xv),
                    y1 + 16.0,
                    xv
                );
            }
        }
        let _ = writeln!(svg, "</g>");
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle" font-family="sans-serif" font-size="12">{y_label}</text>"#,
            (y0 + y1) / 2.0
        );
    }
}

fn open(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
    svg
}

/// Mean return curves with a one-standard-deviation band per algorithm.
pub fn curves_svg(rows: &[SummaryRow], title: &str) -> String {
    let mut series: BTreeMap<Algorithm, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        series.entry(r.algorithm).or_default().push(r);
    }
    let xs = rows.iter().map(|r| r.step as f64);
    let lo = rows
        .iter()
        .map(|r| r.mean_return - r.std_return)
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.mean_return + r.std_return)
        .fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(
        (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
        ),
        (lo, hi),
    );
    let mut svg = open(title);
    frame.axes(&mut svg, "environment step", "episode return", true);
    for (k, (alg, pts)) in series.iter().enumerate() {
        let mut pts = pts.clone();
        pts.sort_by_key(|r| r.step);
        let c = color(*alg);
        let _ = writeln!(
            svg,
            r#"<g class="series" data-algorithm="{alg}" data-steps="{}" data-means="{}" data-stds="{}">"#,
            join(pts.iter().map(|r| r.step as f64)),
            join(pts.iter().map(|r| r.mean_return)),
            join(pts.iter().map(|r| r.std_return)),
        );
        let mut band = String::new();
        for (i, r) in pts.iter().enumerate() {
            let _ = write!(
                band,
                "{}{:.2} {:.2} ",
                if i == 0 { "M" } else { "L" },
                frame.px(r.step as f64),
                frame.py(r.mean_return + r.std_return)
            );
        }
        for r in pts.iter().rev() {
            let _ = write!(
                band,
                "L{:.2} {:.2} ",
                frame.px(r.step as f64),
                frame.py(r.mean_return - r.std_return)
            );
        }
        let _ = writeln!(
            svg,
            r#"<path class="band" d="{}Z" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            band
        );
        let line: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, r)| {
                format!(
                    "{}{:.2} {:.2}",
                    if i == 0 { "M" } else { "L" },
                    frame.px(r.step as f64),
                    frame.py(r.mean_return)
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<path class="mean" d="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{c}" font-family="sans-serif" font-size="12">{alg}</text>"#,
            lx
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bars (one group per regime) with standard-deviation whiskers.
pub fn bars_svg(items: &[(Algorithm, EvalRegime, f64, f64)], title: &str) -> String {
    let lo = items
        .iter()
        .map(|i| (i.2 - i.3).min(0.0))
        .fold(f64::INFINITY, f64::min);
    let hi = items
        .iter()
        .map(|i| (i.2 + i.3).max(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new((0.0, 1.0), (lo, hi));
    let mut svg = open(title);
    frame.axes(&mut svg, "regime", "mean episode return", false);
    let regimes: Vec<EvalRegime> = EvalRegime::ALL
        .into_iter()
        .filter(|r| items.iter().any(|i| i.1 == *r))
        .collect();
    let algs: Vec<Algorithm> = Algorithm::ALL
        .into_iter()
        .filter(|a| items.iter().any(|i| i.0 == *a))
        .collect();
    let group_w = (WIDTH - LEFT - RIGHT) / regimes.len().max(1) as f64;
    let bar_w = group_w * 0.8 / algs.len().max(1) as f64;
    for (g, regime) in regimes.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{regime}</text>"#,
            gx + group_w / 2.0,
            HEIGHT - BOTTOM + 16.0
        );
        for (a, alg) in algs.iter().enumerate() {
            let Some(&(_, _, mean, std)) = items.iter().find(|i| i.0 == *alg && i.1 == *regime)
            else {
                continue;
            };
            let x = gx + group_w * 0.1 + a as f64 * bar_w;
            let (y0, y1) = (frame.py(0.0), frame.py(mean));
            let cx = x + bar_w / 2.0;
            let _ = writeln!(
                svg,
                r#"<g class="bar" data-algorithm="{alg}" data-regime="{regime}" data-mean="{mean}" data-std="{std}"><rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/><path d="M{cx:.2} {:.2} L{cx:.2} {:.2}" stroke="black"/></g>"#,
                y0.min(y1),
                bar_w * 0.9,
                (y1 - y0).abs(),
                color(*alg),
                frame.py(mean - std),
                frame.py(mean + std),
            );
        }
    }
    for (k, alg) in algs.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" fill="{}" font-family="sans-serif" font-size="12">{alg}</text>"#,
            WIDTH - RIGHT + 12.0,
            TOP + 10.0 + 18.0 * k as f64,
            color(*alg)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Numbers embedded in one curve series.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgSeries {
    pub algorithm: Algorithm,
    pub steps: Vec<u64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| invalid(format!("bad number `{x}` in svg")))
        })
        .collect()
}

/// Reads back the `data-*` payload written by [`curves_svg`].
pub fn parse_svg_series(svg: &str) -> Result<Vec<SvgSeries>> {
    svg.lines()
        .filter(|l| l.starts_with(r#"<g class="series""#))
        .map(|tag| {
            let get = |n: &str| attr(tag, n).ok_or_else(|| invalid(format!("series lacks {n}")));
            Ok(SvgSeries {
                algorithm: get("data-algorithm")?.parse()?,
                steps: numbers(get("data-steps")?)?
                    .into_iter()
                    .map(|x| x as u64)
                    .collect(),
                means: numbers(get("data-means")?)?,
                stds: numbers(get("data-stds")?)?,
            })
        })
        .collect()
}
