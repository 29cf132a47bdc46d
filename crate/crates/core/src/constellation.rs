//! Gray-labelled QAM alphabets from BPSK (1 bit) to 256-QAM (8 bits).
//!
//! Even orders are square grids. Odd orders are rectangular grids with
//! `2^ceil(b/2)` in-phase and `2^floor(b/2)` quadrature levels, so every
//! order keeps an independent Gray code per dimension. The label of a point
//! is its index in [`Constellation::points`]; the in-phase Gray bits are the
//! most significant part of the label.

use libm::erfc;
use num_complex::Complex64;
use thiserror::Error;

pub const MAX_ORDER_BITS: u8 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstellationError {
    #[error("constellation order must be 1..={MAX_ORDER_BITS} bits, got {0}")]
    UnsupportedOrder(u8),
    #[error("bit pattern has {got} bits, constellation carries {expected}")]
    PatternLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order_bits: u8,
    i_bits: u8,
    q_bits: u8,
    /// Amplitude of one grid step after unit-energy normalization.
    scale: f64,
    points: Vec<Complex64>,
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// PAM amplitude for Gray code `g` on an `levels`-level axis; index 0 is the
/// most positive level so that label 0 maps to `+1` for BPSK.
fn level(g: u32, levels: u32) -> f64 {
    if levels == 1 {
        return 0.0;
    }
    (levels - 1) as f64 - 2.0 * gray_inverse(g) as f64
}

impl Constellation {
    pub fn new(order_bits: u8) -> Result<Self, ConstellationError> {
        if !(1..=MAX_ORDER_BITS).contains(&order_bits) {
            return Err(ConstellationError::UnsupportedOrder(order_bits));
        }
        let q_bits = order_bits / 2;
        let i_bits = order_bits - q_bits;
        let (li, lq) = (1u32 << i_bits, 1u32 << q_bits);
        let m = 1usize << order_bits;

        let raw: Vec<Complex64> = (0..m as u32)
            .map(|label| {
                let gi = label >> q_bits;
                let gq = label & (lq - 1);
                Complex64::new(level(gi, li), level(gq, lq))
            })
            .collect();
        let es = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        let scale = 1.0 / es.sqrt();
        Ok(Self {
            order_bits,
            i_bits,
            q_bits,
            scale,
            points: raw.into_iter().map(|p| p * scale).collect(),
        })
    }

    pub fn order_bits(&self) -> u8 {
        self.order_bits
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Gray labels in point order. Labels coincide with point indices.
    pub fn labels(&self) -> impl Iterator<Item = u32> {
        0..self.points.len() as u32
    }

    pub fn levels(&self) -> (u32, u32) {
        (1 << self.i_bits, 1 << self.q_bits)
    }

    pub fn map_label(&self, label: u32) -> Complex64 {
        self.points[label as usize]
    }

    /// Maps a bit pattern (MSB first, one bit per byte) to its point.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Complex64, ConstellationError> {
        if bits.len() != self.order_bits as usize {
            return Err(ConstellationError::PatternLength {
                expected: self.order_bits as usize,
                got: bits.len(),
            });
        }
        Ok(self.map_label(bits_to_label(bits)))
    }

    fn slice_axis(&self, u: f64, axis_bits: u8) -> u32 {
        let levels = 1u32 << axis_bits;
        if levels == 1 {
            return 0;
        }
        let t = ((levels - 1) as f64 - u / self.scale) / 2.0;
        let max = (levels - 1) as f64;
        let fl = t.floor();
        let idx = if t <= 0.0 {
            0
        } else if t >= max {
            levels - 1
        } else if t - fl == 0.5 {
            // Equidistant between two levels: lowest label wins.
            let (a, b) = (fl as u32, fl as u32 + 1);
            if gray(a) < gray(b) {
                a
            } else {
                b
            }
        } else {
            t.round() as u32
        };
        gray(idx)
    }

    /// Label of the Euclidean-nearest point; exact ties go to the lowest label.
    pub fn demap_label(&self, y: Complex64) -> u32 {
        let gi = self.slice_axis(y.re, self.i_bits);
        let gq = self.slice_axis(y.im, self.q_bits);
        (gi << self.q_bits) | gq
    }

    /// Hard decision as a bit pattern (MSB first).
    pub fn demap_hard(&self, y: Complex64) -> Vec<u8> {
        label_to_bits(self.demap_label(y), self.order_bits)
    }

    /// Approximate Gray-coded BER at symbol SNR `snr` (linear Es/N0).
    ///
    /// Nearest-neighbour union bound per dimension,
    /// `(2/b)·[(1-1/I) + (1-1/J)]·Q(sqrt(6·snr/(I²+J²-2)))`, which reduces to
    /// `(4/b)(1-1/sqrt(M))·Q(sqrt(3·snr/(M-1)))` for square grids and to
    /// `Q(sqrt(2·snr))` for BPSK.
    pub fn analytic_ber(&self, snr: f64) -> f64 {
        let (li, lq) = self.levels();
        let (li, lq) = (li as f64, lq as f64);
        let b = self.order_bits as f64;
        let prefactor = 2.0 / b * ((1.0 - 1.0 / li) + (1.0 - 1.0 / lq));
        let arg = (6.0 * snr.max(0.0) / (li * li + lq * lq - 2.0)).sqrt();
        (prefactor * q_function(arg)).clamp(0.0, 0.5)
    }
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn bits_to_label(bits: &[u8]) -> u32 {
    bits.iter()
        .fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32)
}

pub fn label_to_bits(label: u32, order_bits: u8) -> Vec<u8> {
    (0..order_bits)
        .rev()
        .map(|i| ((label >> i) & 1) as u8)
        .collect()
}
