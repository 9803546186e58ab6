//! Residual comparison chart.

use std::fmt::Write;

use crate::manager::PolicyKind;
use crate::sim::SimResult;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

pub fn policy_color(policy: PolicyKind) -> &'static str {
    match policy {
        PolicyKind::Equal => "#d62728",
        PolicyKind::Static => "#ff7f0e",
        PolicyKind::EventTriggered => "#2ca02c",
        PolicyKind::OnlineDynamic => "#1f77b4",
    }
}

/// Line chart of `||r_t - a_t||_inf` per policy, with dashed post-prefix means
/// and a shaded band up to the allowable deviation.
pub fn render_comparison(results: &[SimResult], max_deviation: f64) -> String {
    let n_ticks = results.iter().map(SimResult::n_ticks).max().unwrap_or(0).max(2);
    let y_max = results
        .iter()
        .flat_map(|r| r.residual_inf_series.iter().copied())
        .fold(max_deviation, f64::max)
        .max(1.0)
        * 1.1;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + plot_w * t / (n_ticks - 1) as f64;
    let py = |v: f64| TOP + plot_h * (1.0 - v / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r##"<rect class="band" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#2ca02c" fill-opacity="0.12"/>"##,
        LEFT,
        py(max_deviation),
        plot_w,
        py(0.0) - py(max_deviation)
    );

    // Axes.
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        py(0.0),
        LEFT + plot_w,
        py(0.0)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        py(0.0)
    );
    let x_step = ((n_ticks as f64 / 10.0).ceil() as usize).max(1);
    for t in (0..n_ticks).step_by(x_step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            px(t as f64),
            py(0.0) + 18.0
        );
    }
    for i in 0..=5 {
        let v = y_max / 1.1 * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="gray">{v:.1}</text>"#,
            LEFT - 30.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">tick</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">max residual</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (k, r) in results.iter().enumerate() {
        let color = policy_color(r.policy);
        let mut d = String::new();
        for (t, v) in r.residual_inf_series.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if t == 0 { "M" } else { " L" }, px(t as f64), py(*v));
        }
        let _ = writeln!(
            s,
            r#"<path class="series" data-policy="{}" d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            r.policy
        );
        let start = (r.stationary_prefix + 1).min(n_ticks - 1) as f64;
        let mean = r.mean_residual_after_prefix;
        let _ = writeln!(
            s,
            r#"<line class="mean" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
            px(start),
            py(mean),
            LEFT + plot_w,
            py(mean)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="{color}">{mean:.2}</text>"#,
            LEFT - 2.0,
            py(mean) + 4.0
        );
        let ly = TOP + 20.0 * k as f64 + 10.0;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, r.policy);
    }
    s.push_str("</svg>\n");
    s
}
