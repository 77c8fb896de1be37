//! Minimal hand-rolled SVG grouped bar chart. Byte-deterministic: no fonts
//! are rasterized and no timestamps or random ids are embedded.

/// Two bars per method: total tokens and effective tokens.
pub fn grouped_bar_chart(title: &str, rows: &[(&str, u64, u64)]) -> String {
    const WIDTH: f64 = 760.0;
    const HEIGHT: f64 = 420.0;
    const MARGIN_LEFT: f64 = 70.0;
    const MARGIN_BOTTOM: f64 = 70.0;
    const MARGIN_TOP: f64 = 50.0;
    let plot_w = WIDTH - MARGIN_LEFT - 20.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let max_value = rows
        .iter()
        .map(|(_, total, effective)| (*total).max(*effective))
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));

    // Y axis with four gridlines.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = MARGIN_TOP + plot_h * (1.0 - frac);
        let value = (max_value * frac).round() as u64;
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{value}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
    }

    let group_w = plot_w / rows.len().max(1) as f64;
    let bar_w = (group_w * 0.32).min(46.0);
    for (i, (method, total, effective)) in rows.iter().enumerate() {
        let center = MARGIN_LEFT + group_w * (i as f64 + 0.5);
        for (offset, value, color) in [
            (-bar_w, *total, "#4878a8"),
            (2.0, *effective, "#d1895c"),
        ] {
            let h = plot_h * (value as f64 / max_value);
            let x = center + offset;
            let y = MARGIN_TOP + plot_h - h;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
                 fill=\"{color}\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
                 text-anchor=\"middle\">{value}</text>\n",
                x + bar_w / 2.0,
                y - 4.0
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{center:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            xml_escape(method)
        ));
    }

    // Legend.
    let legend_y = HEIGHT - 26.0;
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"#4878a8\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">total tokens</text>\n",
        legend_y - 10.0,
        MARGIN_LEFT + 18.0,
        legend_y
    ));
    svg.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"#d1895c\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">effective tokens</text>\n",
        MARGIN_LEFT + 130.0,
        legend_y - 10.0,
        MARGIN_LEFT + 148.0,
        legend_y
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
