use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hsl {
    /// degrees in `[0, 360)`
    pub h: f64,
    pub s: f64,
    pub l: f64,
}

pub type Rgb = [u8; 3];

impl Hsl {
    pub fn to_rgb(self) -> Rgb {
        let h = self.h.rem_euclid(360.0) / 60.0;
        let c = (1.0 - (2.0 * self.l - 1.0).abs()) * self.s;
        let x = c * (1.0 - (h % 2.0 - 1.0).abs());
        let (r, g, b) = match h as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = self.l - c / 2.0;
        let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
        [q(r), q(g), q(b)]
    }
}

pub fn rgb_hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn parse_hex(s: &str) -> Result<Rgb> {
    let t = s.strip_prefix('#').unwrap_or(s);
    if t.len() != 6 {
        return Err(Error::arg(format!("bad color `{s}`")));
    }
    let byte = |i: usize| u8::from_str_radix(&t[i..i + 2], 16).map_err(|_| Error::arg(format!("bad color `{s}`")));
    Ok([byte(0)?, byte(2)?, byte(4)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaletteName {
    Vlag,
    RedDiverging,
    ThreeDomainBasic,
}

impl std::str::FromStr for PaletteName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "vlag" => Ok(PaletteName::Vlag),
            "red_diverging" => Ok(PaletteName::RedDiverging),
            "three_domain_basic" => Ok(PaletteName::ThreeDomainBasic),
            _ => Err(Error::arg(format!(
                "unknown palette `{s}` (expected vlag, red_diverging, three_domain_basic)"
            ))),
        }
    }
}

pub const PALETTE_VERSION: &str = "palette-v1";

/// Background and foreground colors zipped into color schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteSpec {
    pub name: PaletteName,
    pub version: String,
    pub background: Vec<Hsl>,
    pub foreground: Vec<Hsl>,
}

const BG_S: f64 = 0.55;
const BG_L: f64 = 0.78;
const FG_S: f64 = 0.75;
const FG_L: f64 = 0.35;

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl PaletteSpec {
    pub fn new(name: PaletteName) -> Self {
        let fg_hues: Vec<f64> = (0..7).map(|k| k as f64 * 360.0 / 7.0).collect();
        let bg_hues = match name {
            // blue through violet to red, avoiding the green half of the wheel
            PaletteName::Vlag => linspace(240.0, 370.0, 7).into_iter().map(|h| h % 360.0).collect(),
            PaletteName::RedDiverging => linspace(0.0, 350.0, 7),
            PaletteName::ThreeDomainBasic => vec![0.0, 30.0, 120.0, 150.0, 240.0, 270.0],
        };
        let fg_hues = match name {
            PaletteName::ThreeDomainBasic => vec![200.0, 230.0, 300.0, 330.0, 40.0, 70.0],
            _ => fg_hues,
        };
        Self {
            name,
            version: PALETTE_VERSION.to_string(),
            background: bg_hues.into_iter().map(|h| Hsl { h, s: BG_S, l: BG_L }).collect(),
            foreground: fg_hues.into_iter().map(|h| Hsl { h, s: FG_S, l: FG_L }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.background.len()
    }

    pub fn is_empty(&self) -> bool {
        self.background.is_empty()
    }

    /// `(foreground, background)` of scheme `k`.
    pub fn scheme(&self, k: usize) -> (Rgb, Rgb) {
        (self.foreground[k].to_rgb(), self.background[k].to_rgb())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsl_primaries() {
        assert_eq!(Hsl { h: 0.0, s: 1.0, l: 0.5 }.to_rgb(), [255, 0, 0]);
        assert_eq!(Hsl { h: 120.0, s: 1.0, l: 0.5 }.to_rgb(), [0, 255, 0]);
        assert_eq!(Hsl { h: 240.0, s: 1.0, l: 0.5 }.to_rgb(), [0, 0, 255]);
        assert_eq!(Hsl { h: 77.0, s: 0.0, l: 1.0 }.to_rgb(), [255, 255, 255]);
    }

    #[test]
    fn hex_round_trip() {
        assert_eq!(parse_hex(&rgb_hex([1, 171, 255])).unwrap(), [1, 171, 255]);
        assert!(parse_hex("#12").is_err());
    }

    #[test]
    fn foreground_hues_equally_spaced() {
        for name in [PaletteName::Vlag, PaletteName::RedDiverging] {
            let p = PaletteSpec::new(name);
            assert_eq!(p.len(), 7);
            for w in p.foreground.windows(2) {
                assert!((w[1].h - w[0].h - 360.0 / 7.0).abs() < 1e-12);
            }
            assert!(p.background.iter().all(|c| c.s == BG_S && c.l == BG_L));
        }
        let red = PaletteSpec::new(PaletteName::RedDiverging);
        assert_eq!(red.background[0].h, 0.0);
        assert_eq!(red.background[6].h, 350.0);
    }
}
