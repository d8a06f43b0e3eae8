use std::fmt::Write;

use serde::{Deserialize, Serialize};

use ghm_core::numeric::{linspace, Interval};
use ghm_core::symbolic::{fiber_image, Word};
use ghm_core::{GhmError, GhmSpec};

/// Boundary of one image band `U_A`: lower and upper fiber ends over the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub word: Word,
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    /// Fiber overlap with `other` at grid point `k`.
    pub fn overlap_at(&self, other: &Band, k: usize) -> f64 {
        Interval::new(self.lower[k], self.upper[k]).overlap(&Interval::new(other.lower[k], other.upper[k]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripPolygons {
    pub n: usize,
    pub bands: Vec<Band>,
}

/// Bands of `Fⁿ([0,1]²)`: one per word of length `n`, sampled on `x_grid_n` points.
pub fn emit_strip_polygons(spec: &GhmSpec, n: usize, x_grid_n: usize, max_words: usize) -> Result<StripPolygons, GhmError> {
    if n == 0 {
        return Err(GhmError::ParameterDomain { name: "n", value: 0.0, expected: "n >= 1" });
    }
    let count = (spec.alphabet() as f64).powi(n as i32);
    if count > max_words as f64 {
        return Err(GhmError::Budget(format!("{count} bands at n = {n} exceed the budget of {max_words}")));
    }
    let xs = linspace(0.0, 1.0, x_grid_n.max(2));
    let mut bands = Vec::new();
    for word in Word::all_of_length(spec.alphabet(), n) {
        let mut lower = Vec::with_capacity(xs.len());
        let mut upper = Vec::with_capacity(xs.len());
        for &x in &xs {
            let iv = fiber_image(spec, &word, x, false)?.expect("full branches cover every fiber");
            lower.push(iv.lo);
            upper.push(iv.hi);
        }
        bands.push(Band { word, x: xs.clone(), lower, upper });
    }
    Ok(StripPolygons { n, bands })
}

impl StripPolygons {
    /// One row per vertex; each band is a closed polygon walked along the
    /// lower edge and back along the upper edge.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("band,word,vertex,x,y\n");
        for (b, band) in self.bands.iter().enumerate() {
            let word = word_label(&band.word);
            for (v, (x, y)) in polygon(band).enumerate() {
                let _ = writeln!(s, "{b},{word},{v},{x:.9},{y:.9}");
            }
        }
        s
    }

    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 480.0;
        const PAD: f64 = 10.0;
        let px = |x: f64| PAD + x * SIZE;
        let py = |y: f64| PAD + (1.0 - y) * SIZE;
        let mut s = String::new();
        let full = SIZE + 2.0 * PAD;
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
        );
        let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#);
        let opacity = (0.6 / self.bands.len() as f64).max(0.08);
        for band in &self.bands {
            let pts: Vec<String> = polygon(band).map(|(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polygon data-word="{}" points="{}" fill="steelblue" fill-opacity="{opacity:.3}" stroke="navy" stroke-width="0.5"/>"#,
                word_label(&band.word),
                pts.join(" ")
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn polygon(band: &Band) -> impl Iterator<Item = (f64, f64)> + '_ {
    let lower = band.x.iter().copied().zip(band.lower.iter().copied());
    let upper = band.x.iter().copied().zip(band.upper.iter().copied()).rev();
    lower.chain(upper)
}

fn word_label(w: &Word) -> String {
    let sep = if w.symbols().iter().all(|&s| s < 10) { "" } else { "." };
    w.symbols().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(sep)
}
