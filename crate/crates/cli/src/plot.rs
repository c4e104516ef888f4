//! Minimal static SVG line charts, derived purely from the run CSV.

/// One column of the run log, extracted by header name.
pub fn csv_column(csv: &str, name: &str) -> Option<Vec<f64>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let idx = header.iter().position(|h| *h == name)?;
    let mut out = Vec::new();
    for line in lines {
        let field = line.split(',').nth(idx)?;
        out.push(field.parse().ok()?);
    }
    Some(out)
}

/// Mean of the four rotor-command columns.
pub fn csv_mean_thrust(csv: &str) -> Option<Vec<f64>> {
    let u: Vec<Vec<f64>> = ["u1", "u2", "u3", "u4"]
        .iter()
        .map(|c| csv_column(csv, c))
        .collect::<Option<_>>()?;
    Some(
        (0..u[0].len())
            .map(|i| (u[0][i] + u[1][i] + u[2][i] + u[3][i]) / 4.0)
            .collect(),
    )
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    (0..=n).map(|i| lo + span * i as f64 / n as f64).collect()
}

/// Single-series line chart. Output is deterministic for identical input.
pub fn line_chart(title: &str, y_label: &str, t: &[f64], y: &[f64]) -> String {
    assert_eq!(t.len(), y.len());
    let (w, h) = (640.0, 360.0);
    let (ml, mr, mt, mb) = (62.0, 16.0, 34.0, 42.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let (t_lo, t_hi) = (
        t.iter().cloned().fold(f64::INFINITY, f64::min),
        t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut y_lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (y_hi - y_lo).abs() < 1e-9 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let sx = |v: f64| ml + (v - t_lo) / (t_hi - t_lo).max(1e-12) * pw;
    let sy = |v: f64| mt + ph - (v - y_lo) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        ml + pw / 2.0
    ));

    // Axes and ticks.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    for tick in nice_ticks(t_lo, t_hi, 5) {
        let x = sx(tick);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            mt + ph,
            mt + ph + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{tick:.2}</text>\n",
            mt + ph + 18.0
        ));
    }
    for tick in nice_ticks(y_lo, y_hi, 5) {
        let yv = sy(tick);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{yv:.1}\" x2=\"{ml}\" y2=\"{yv:.1}\" stroke=\"black\"/>\n",
            ml - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{tick:.3}</text>\n",
            ml - 8.0,
            yv + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">t [s]</text>\n",
        ml + pw / 2.0,
        h - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    // Data polyline.
    let mut points = String::new();
    for (ti, yi) in t.iter().zip(y.iter()) {
        points.push_str(&format!("{:.2},{:.2} ", sx(*ti), sy(*yi)));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\"/>\n",
        points.trim_end()
    ));
    svg.push_str("</svg>\n");
    svg
}
