//! Embedded 5x7 bitmap font for scale-bar labels.

pub const GLYPH_COLS: u32 = 5;
pub const GLYPH_ROWS: u32 = 7;

/// Rows top to bottom, bit 4 is the leftmost column.
fn bitmap(c: char) -> [u8; 7] {
    match c {
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        '.' => [0, 0, 0, 0, 0, 0b01100, 0b01100],
        '-' => [0, 0, 0, 0b11111, 0, 0, 0],
        'n' => [0, 0, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001],
        'm' => [0, 0, 0b11010, 0b10101, 0b10101, 0b10001, 0b10001],
        'µ' | 'μ' | 'u' => [0, 0b10001, 0b10001, 0b10001, 0b11011, 0b10110, 0b10000],
        _ => [0; 7],
    }
}

/// Pixel geometry of a label rendered `text_h` pixels tall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextMetrics {
    pub glyph_w: u32,
    pub spacing: u32,
    pub text_h: u32,
}

impl TextMetrics {
    pub fn for_height(text_h: u32) -> Self {
        let text_h = text_h.max(1);
        let glyph_w = ((f64::from(GLYPH_COLS) * f64::from(text_h) / f64::from(GLYPH_ROWS)).round() as u32).max(1);
        let spacing = ((f64::from(text_h) / f64::from(GLYPH_ROWS)).round() as u32).max(1);
        TextMetrics { glyph_w, spacing, text_h }
    }

    pub fn width(&self, text: &str) -> u32 {
        let n = text.chars().count() as u32;
        if n == 0 {
            0
        } else {
            n * self.glyph_w + (n - 1) * self.spacing
        }
    }
}

/// Calls `plot(x, y)` for every inked pixel of `text`, nearest-neighbor
/// scaled, relative to the text origin.
pub fn for_each_text_pixel(text: &str, m: TextMetrics, mut plot: impl FnMut(u32, u32)) {
    for (i, c) in text.chars().enumerate() {
        let rows = bitmap(c);
        let x0 = i as u32 * (m.glyph_w + m.spacing);
        for dy in 0..m.text_h {
            let row = rows[(dy * GLYPH_ROWS / m.text_h) as usize];
            if row == 0 {
                continue;
            }
            for dx in 0..m.glyph_w {
                let col = dx * GLYPH_COLS / m.glyph_w;
                if row & (1 << (GLYPH_COLS - 1 - col)) != 0 {
                    plot(x0 + dx, dy);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(text: &str, h: u32) -> Vec<String> {
        let m = TextMetrics::for_height(h);
        let mut grid = vec![vec!['.'; m.width(text) as usize]; h as usize];
        for_each_text_pixel(text, m, |x, y| grid[y as usize][x as usize] = '#');
        grid.into_iter().map(|r| r.into_iter().collect()).collect()
    }

    #[test]
    fn native_size_matches_bitmap() {
        assert_eq!(
            render("1", 7),
            vec!["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]
        );
    }

    #[test]
    fn doubled_size_is_nearest_neighbor() {
        let big = render("7", 14);
        assert_eq!(big.len(), 14);
        assert_eq!(big[0], "##########");
        assert_eq!(big[1], big[0]);
        assert_eq!(big[13], "..##......");
    }

    #[test]
    fn metrics() {
        let m = TextMetrics::for_height(14);
        assert_eq!((m.glyph_w, m.spacing), (10, 2));
        assert_eq!(m.width("30 µm"), 5 * 10 + 4 * 2);
        assert_eq!(m.width(""), 0);
    }
}
