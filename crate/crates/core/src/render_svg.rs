//! Standalone SVG 1.1 output for scenes.
//!
//! Output is byte-deterministic: every number is printed with three
//! decimals and elements follow scene order.

use std::fmt::Write;

use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub background: String,
    pub rect: String,
    pub line: String,
    pub glyph: String,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            background: "#ffffff".into(),
            rect: "#9fb7cf".into(),
            line: "#1f2a36".into(),
            glyph: "#111111".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub stroke_width_px: f64,
    pub palette: Palette,
    /// Gaussian std-dev applied to the interval layer in glyph scenes.
    pub blur_std_dev: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { stroke_width_px: 1.5, palette: Palette::default(), blur_std_dev: 2.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.stroke_width_px.is_finite() && self.stroke_width_px > 0.0) {
            return Err(format!("stroke width {} must be positive", self.stroke_width_px));
        }
        if !(self.blur_std_dev.is_finite() && self.blur_std_dev >= 0.0) {
            return Err(format!("blur std-dev {} must be non-negative", self.blur_std_dev));
        }
        let p = &self.palette;
        for color in [&p.background, &p.rect, &p.line, &p.glyph] {
            let hex = color.strip_prefix('#').unwrap_or("");
            if !matches!(hex.len(), 3 | 6) || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(format!("color `{color}` is not a hex color"));
            }
        }
        Ok(())
    }
}

/// Fixed three-decimal formatting, never `-0.000`.
struct Num(f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = format!("{:.3}", self.0);
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
            f.write_str(&s[1..])
        } else {
            f.write_str(&s)
        }
    }
}

const BLUR_FILTER_ID: &str = "background-blur";

fn line(out: &mut String, x1: f64, y1: f64, x2: f64, y2: f64) {
    let _ = writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, Num(x1), Num(y1), Num(x2), Num(y2));
}

pub fn emit_svg(scene: &Scene, config: &RenderConfig) -> Vec<u8> {
    let (w, h) = (scene.viewport.width_px, scene.viewport.height_px);
    let p = &config.palette;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        Num(w),
        Num(h),
        Num(w),
        Num(h)
    );
    if scene.blur_background {
        let _ = writeln!(
            out,
            r#"<defs><filter id="{BLUR_FILTER_ID}"><feGaussianBlur stdDeviation="{}"/></filter></defs>"#,
            Num(config.blur_std_dev)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="0.000" y="0.000" width="{}" height="{}" fill="{}"/>"#,
        Num(w),
        Num(h),
        p.background
    );

    if !scene.rects.is_empty() {
        let filter = if scene.blur_background {
            format!(r#" filter="url(#{BLUR_FILTER_ID})""#)
        } else {
            String::new()
        };
        let _ = writeln!(out, r#"<g class="intervals" fill="{}"{filter}>"#, p.rect);
        for r in &scene.rects {
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
                Num(r.x),
                Num(r.y),
                Num(r.w),
                Num(r.h)
            );
        }
        out.push_str("</g>\n");
    }

    let stroke = Num(config.stroke_width_px);
    if !scene.lines.is_empty() {
        let _ = writeln!(out, r#"<g class="lines" stroke="{}" stroke-width="{stroke}" fill="none">"#, p.line);
        for l in &scene.lines {
            line(&mut out, l.x1, l.y1, l.x2, l.y2);
        }
        out.push_str("</g>\n");
    }

    if !scene.glyphs.is_empty() {
        let _ = writeln!(
            out,
            r#"<g class="glyphs" stroke="{}" stroke-width="{stroke}" stroke-linecap="round" fill="none">"#,
            p.glyph
        );
        for g in &scene.glyphs {
            // segments are stored partition by partition
            for s in &g.segments {
                line(&mut out, s.x1, s.y1, s.x2, s.y2);
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}
