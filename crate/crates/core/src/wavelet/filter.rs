use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use super::WaveletError;

const COEFFICIENT_TABLE: &str = include_str!("coefficients.txt");

/// Wavelet families the transform knows how to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WaveletFamily {
    Haar,
    Db2,
    Db7,
    Db19,
    Sym7,
    Sym19,
    Bior2_6,
    Bior4_4,
}

impl WaveletFamily {
    pub const ALL: [WaveletFamily; 8] = [
        WaveletFamily::Haar,
        WaveletFamily::Db2,
        WaveletFamily::Db7,
        WaveletFamily::Db19,
        WaveletFamily::Sym7,
        WaveletFamily::Sym19,
        WaveletFamily::Bior2_6,
        WaveletFamily::Bior4_4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Db2 => "db2",
            WaveletFamily::Db7 => "db7",
            WaveletFamily::Db19 => "db19",
            WaveletFamily::Sym7 => "sym7",
            WaveletFamily::Sym19 => "sym19",
            WaveletFamily::Bior2_6 => "bior2.6",
            WaveletFamily::Bior4_4 => "bior4.4",
        }
    }

    pub fn is_orthogonal(self) -> bool {
        !matches!(self, WaveletFamily::Bior2_6 | WaveletFamily::Bior4_4)
    }

    pub(crate) fn supported_list() -> String {
        Self::ALL
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletFamily {
    type Err = WaveletError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| WaveletError::UnknownFamily {
                name: s.to_string(),
                supported: Self::supported_list(),
            })
    }
}

/// Analysis/synthesis filter quadruple. All four vectors share one even length.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletFilter {
    family: WaveletFamily,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl WaveletFilter {
    pub fn family(&self) -> WaveletFamily {
        self.family
    }

    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }

    /// Builds an orthogonal filter set from its analysis low-pass.
    fn orthogonal(family: WaveletFamily, dec_lo: Vec<f64>) -> Self {
        let n = dec_lo.len();
        let dec_hi: Vec<f64> = (0..n)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * dec_lo[n - 1 - k])
            .collect();
        let rec_lo = dec_lo.iter().rev().copied().collect();
        let rec_hi = dec_hi.iter().rev().copied().collect();
        Self {
            family,
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }
}

/// Constructs the filter quadruple for `family`.
pub fn make_filter(family: WaveletFamily) -> WaveletFilter {
    match family {
        WaveletFamily::Haar => WaveletFilter::orthogonal(family, vec![SQRT_2 / 2.0; 2]),
        WaveletFamily::Db2 => {
            let s3 = 3f64.sqrt();
            let d = 4.0 * SQRT_2;
            WaveletFilter::orthogonal(
                family,
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d],
            )
        }
        _ => table_filter(family),
    }
}

/// Parses a family name and builds its filter.
pub fn make_filter_by_name(name: &str) -> Result<WaveletFilter, WaveletError> {
    Ok(make_filter(name.parse()?))
}

fn table_filter(family: WaveletFamily) -> WaveletFilter {
    // The table is compiled in and covered by tests; a parse failure is a build defect.
    parse_table_entry(COEFFICIENT_TABLE, family)
        .unwrap_or_else(|e| panic!("embedded coefficient table: {e}"))
}

fn parse_row(line: Option<&str>, label: &str) -> Result<Vec<f64>, String> {
    let line = line.ok_or_else(|| format!("missing {label} row"))?;
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(label) {
        return Err(format!("expected {label} row, found {line:?}"));
    }
    tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| format!("{label}: bad coefficient {t:?}: {e}"))
        })
        .collect()
}

fn parse_table_entry(table: &str, family: WaveletFamily) -> Result<WaveletFilter, String> {
    let mut lines = table
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    while let Some(line) = lines.next() {
        let header: Vec<&str> = line.split_whitespace().collect();
        if header.first() != Some(&"family") || header.get(1) != Some(&family.name()) {
            continue;
        }
        let length: usize = header
            .get(3)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad header {line:?}"))?;
        let dec_lo = parse_row(lines.next(), "dec_lo")?;
        let dec_hi = parse_row(lines.next(), "dec_hi")?;
        let rec_lo = parse_row(lines.next(), "rec_lo")?;
        let rec_hi = parse_row(lines.next(), "rec_hi")?;
        for (label, v) in [
            ("dec_lo", &dec_lo),
            ("dec_hi", &dec_hi),
            ("rec_lo", &rec_lo),
            ("rec_hi", &rec_hi),
        ] {
            if v.len() != length {
                return Err(format!(
                    "{family}: {label} has {} taps, header says {length}",
                    v.len()
                ));
            }
        }
        return Ok(WaveletFilter {
            family,
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        });
    }
    Err(format!("no entry for {family}"))
}
