//! Ground-truth transmittance maps: uniform fields, glyph phantoms and
//! line-pair resolution targets.

use super::ImagingError;

/// Row-major grid of transmittance values with a physical cell size.
///
/// Cell `(row, col)` covers `[col·pitch, (col+1)·pitch) × [row·pitch, (row+1)·pitch)`
/// in micrometres; `x` runs along columns and `y` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceMap {
    rows: usize,
    cols: usize,
    pitch_um: f64,
    grid: Vec<f64>,
}

impl TransmittanceMap {
    pub fn new(rows: usize, cols: usize, pitch_um: f64, grid: Vec<f64>) -> Result<Self, ImagingError> {
        if rows == 0 || cols == 0 {
            return Err(ImagingError::InvalidMap("grid is empty".into()));
        }
        if grid.len() != rows * cols {
            return Err(ImagingError::InvalidMap(format!(
                "grid has {} values, expected {rows}x{cols}",
                grid.len()
            )));
        }
        if !(pitch_um > 0.0 && pitch_um.is_finite()) {
            return Err(ImagingError::InvalidMap(format!("pitch {pitch_um} um")));
        }
        if let Some(bad) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImagingError::InvalidMap(format!("transmittance {bad} outside [0, 1]")));
        }
        Ok(TransmittanceMap {
            rows,
            cols,
            pitch_um,
            grid,
        })
    }

    pub fn uniform(rows: usize, cols: usize, pitch_um: f64, value: f64) -> Result<Self, ImagingError> {
        Self::new(rows, cols, pitch_um, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch_um(&self) -> f64 {
        self.pitch_um
    }

    pub fn width_um(&self) -> f64 {
        self.cols as f64 * self.pitch_um
    }

    pub fn height_um(&self) -> f64 {
        self.rows as f64 * self.pitch_um
    }

    pub fn values(&self) -> &[f64] {
        &self.grid
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.cols + col]
    }

    pub fn min(&self) -> f64 {
        self.grid.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.grid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().sum::<f64>() / self.grid.len() as f64
    }

    /// Shift every value so the map mean becomes `target`.
    pub fn with_mean(mut self, target: f64) -> Result<Self, ImagingError> {
        let shift = target - self.mean();
        for v in &mut self.grid {
            *v += shift;
        }
        Self::new(self.rows, self.cols, self.pitch_um, self.grid)
    }
}

/// 5×7 bitmaps, one string per row, `#` marks a stroke.
fn glyph_rows(c: char) -> Option<[&'static str; 7]> {
    Some(match c {
        'a' => [
            ".....", ".....", ".###.", "....#", ".####", "#...#", ".####",
        ],
        'Q' => [
            ".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#",
        ],
        'S' => [
            ".####", "#....", "#....", ".###.", "....#", "....#", "####.",
        ],
        'N' => [
            "#...#", "##..#", "#.#.#", "#.#.#", "#..##", "#...#", "#...#",
        ],
        'E' => [
            "#####", "#....", "#....", "####.", "#....", "#....", "#####",
        ],
        'T' => [
            "#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#..",
        ],
        ' ' => [
            ".....", ".....", ".....", ".....", ".....", ".....", ".....",
        ],
        _ => return None,
    })
}

/// Parameters of a low-contrast text phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub text: String,
    /// Side of one glyph bitmap pixel in micrometres.
    pub stroke_um: f64,
    pub background: f64,
    /// Transmittance drop inside strokes.
    pub contrast: f64,
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
}

impl Default for PhantomSpec {
    /// 300 × 150 µm field with "SSN" at 95% transmittance and 2% contrast.
    fn default() -> Self {
        PhantomSpec {
            text: "SSN".into(),
            stroke_um: 10.0,
            background: 0.95,
            contrast: 0.02,
            rows: 150,
            cols: 300,
            pitch_um: 1.0,
        }
    }
}

/// Glyph-shaped phantom: text centred in the field, strokes `contrast`
/// darker than the background.
pub fn glyph_phantom(spec: &PhantomSpec) -> Result<TransmittanceMap, ImagingError> {
    let glyphs = spec
        .text
        .chars()
        .map(|c| glyph_rows(c).ok_or(ImagingError::UnsupportedGlyph(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let stroke = spec.stroke_um;
    if !(stroke > 0.0) {
        return Err(ImagingError::InvalidMap(format!("stroke {stroke} um")));
    }
    let advance = 6.0 * stroke;
    let text_w = glyphs.len() as f64 * advance - stroke;
    let text_h = 7.0 * stroke;
    let field_w = spec.cols as f64 * spec.pitch_um;
    let field_h = spec.rows as f64 * spec.pitch_um;
    let x0 = 0.5 * (field_w - text_w);
    let y0 = 0.5 * (field_h - text_h);
    let low = spec.background - spec.contrast;

    let mut grid = vec![spec.background; spec.rows * spec.cols];
    for row in 0..spec.rows {
        let y = (row as f64 + 0.5) * spec.pitch_um - y0;
        if y < 0.0 || y >= text_h {
            continue;
        }
        let gy = (y / stroke) as usize;
        for col in 0..spec.cols {
            let x = (col as f64 + 0.5) * spec.pitch_um - x0;
            if x < 0.0 {
                continue;
            }
            let index = (x / advance) as usize;
            let within = x - index as f64 * advance;
            if index >= glyphs.len() || within >= 5.0 * stroke {
                continue;
            }
            let gx = (within / stroke) as usize;
            if glyphs[index][gy].as_bytes()[gx] == b'#' {
                grid[row * spec.cols + col] = low;
            }
        }
    }
    TransmittanceMap::new(spec.rows, spec.cols, spec.pitch_um, grid)
}

/// Geometry of one line pair, x intervals in micrometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGroup {
    pub width_um: f64,
    pub lines: [(f64, f64); 2],
    pub gap: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub background: f64,
    /// Transmittance of the opaque markers.
    pub line_eta: f64,
    /// Clear space before the first and after the last group.
    pub margin_um: f64,
    /// Clear space between neighbouring groups.
    pub group_spacing_um: f64,
    pub height_um: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            background: 1.0,
            line_eta: 0.05,
            margin_um: 15.0,
            group_spacing_um: 15.0,
            height_um: 10.0,
        }
    }
}

/// A line-pair target and the positions of its groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionTarget {
    pub map: TransmittanceMap,
    pub groups: Vec<LineGroup>,
    pub background: f64,
    pub line_eta: f64,
}

/// Vertical opaque line pairs, each pair separated by a gap equal to its
/// width, groups ordered from widest to narrowest.
pub fn make_resolution_target(line_widths_um: &[f64], pitch_um: f64) -> Result<ResolutionTarget, ImagingError> {
    make_resolution_target_with(line_widths_um, pitch_um, &TargetSpec::default())
}

pub fn make_resolution_target_with(
    line_widths_um: &[f64],
    pitch_um: f64,
    spec: &TargetSpec,
) -> Result<ResolutionTarget, ImagingError> {
    if !(pitch_um > 0.0) {
        return Err(ImagingError::InvalidMap(format!("pitch {pitch_um} um")));
    }
    if let Some(w) = line_widths_um.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(ImagingError::InvalidMap(format!("line width {w} um")));
    }
    let mut widths = line_widths_um.to_vec();
    widths.sort_by(|a, b| b.total_cmp(a));
    if let Some(&smallest) = widths.last() {
        if smallest / pitch_um < 4.0 - 1e-9 {
            return Err(ImagingError::PitchTooCoarse {
                pitch_um,
                smallest_um: smallest,
            });
        }
    }

    let cells = |um: f64| (um / pitch_um).round() as usize;
    let margin = cells(spec.margin_um);
    let spacing = cells(spec.group_spacing_um);
    let rows = cells(spec.height_um).max(1);

    let mut layout = Vec::with_capacity(widths.len());
    let mut cursor = margin;
    for (i, &w) in widths.iter().enumerate() {
        if i > 0 {
            cursor += spacing;
        }
        let wc = cells(w);
        layout.push((w, cursor, wc));
        cursor += 3 * wc;
    }
    let cols = cursor + margin;

    let mut grid = vec![spec.background; rows * cols];
    let mut groups = Vec::with_capacity(layout.len());
    let um = |c: usize| c as f64 * pitch_um;
    for &(w, start, wc) in &layout {
        for col in (start..start + wc).chain(start + 2 * wc..start + 3 * wc) {
            for row in 0..rows {
                grid[row * cols + col] = spec.line_eta;
            }
        }
        groups.push(LineGroup {
            width_um: w,
            lines: [(um(start), um(start + wc)), (um(start + 2 * wc), um(start + 3 * wc))],
            gap: (um(start + wc), um(start + 2 * wc)),
        });
    }
    Ok(ResolutionTarget {
        map: TransmittanceMap::new(rows, cols, pitch_um, grid)?,
        groups,
        background: spec.background,
        line_eta: spec.line_eta,
    })
}
