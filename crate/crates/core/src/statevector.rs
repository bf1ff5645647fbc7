//! Dense statevector execution of the interference circuit on small
//! instances. This is a correctness oracle for the direct computation in
//! [`crate::measure`], not a performance path.
//!
//! Qubit layout, least significant first: the `b` scratch register, then the
//! parameter register `y`, then the domain register `x`.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::DataTable;
use crate::model::TrialModel;
use crate::params::ParameterSpace;

pub const DEFAULT_AMPLITUDE_CAP: usize = 1 << 20;
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Below this `z = 0` probability the conditional distribution is undefined.
pub const UNDEFINED_BELOW: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct Registers {
    x_qubits: u32,
    y_qubits: u32,
    b_qubits: u32,
    amps: Vec<Complex64>,
}

fn log2_exact(n: usize, what: &str) -> Result<u32> {
    if n.is_power_of_two() {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::UnsupportedShape(format!("{what} has {n} points, not a power of two")))
    }
}

fn check_cap(x_qubits: u32, y_qubits: u32, b_qubits: u32, cap: usize) -> Result<()> {
    let bits = x_qubits + y_qubits + b_qubits;
    if bits >= usize::BITS || (1usize << bits) > cap {
        return Err(Error::UnsupportedShape(format!(
            "2^{bits} amplitudes exceed the cap of {cap}"
        )));
    }
    Ok(())
}

impl Registers {
    fn basis(x_qubits: u32, y_qubits: u32, b_qubits: u32, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (x_qubits + y_qubits + b_qubits)];
        amps[index] = Complex64::new(1.0, 0.0);
        Self {
            x_qubits,
            y_qubits,
            b_qubits,
            amps,
        }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn x_qubits(&self) -> u32 {
        self.x_qubits
    }

    pub fn y_qubits(&self) -> u32 {
        self.y_qubits
    }

    pub fn b_qubits(&self) -> u32 {
        self.b_qubits
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_norm(&self, after: &str) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Consistency(format!("norm {n} after {after}")));
        }
        Ok(())
    }

    fn b_dim(&self) -> usize {
        1 << self.b_qubits
    }

    fn y_dim(&self) -> usize {
        1 << self.y_qubits
    }

    /// Hadamard on absolute qubit `bit`.
    fn hadamard(&mut self, bit: u32) {
        let mask = 1usize << bit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a, b) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | mask] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    fn hadamard_x(&mut self) -> Result<()> {
        for k in 0..self.x_qubits {
            self.hadamard(self.b_qubits + self.y_qubits + k);
            self.check_norm("H on x")?;
        }
        Ok(())
    }

    fn hadamard_y(&mut self) -> Result<()> {
        for k in 0..self.y_qubits {
            self.hadamard(self.b_qubits + k);
            self.check_norm("H on y")?;
        }
        Ok(())
    }

    /// The phase state `Σ_k exp(2πik/2^N)/sqrt(2^N) |k>`, i.e. the Fourier
    /// transform of `|0…01>`.
    fn phase_state(b_qubits: u32) -> Vec<Complex64> {
        let dim = 1usize << b_qubits;
        let norm = 1.0 / (dim as f64).sqrt();
        (0..dim)
            .map(|k| Complex64::from_polar(norm, TAU * k as f64 / dim as f64))
            .collect()
    }

    /// Map `|0…01>` on `b` to the phase state; every `b` block must be in that basis state.
    fn prepare_b(&mut self) -> Result<()> {
        let dim = self.b_dim();
        let phi = Self::phase_state(self.b_qubits);
        for block in self.amps.chunks_mut(dim) {
            let a = block[1];
            if block
                .iter()
                .enumerate()
                .any(|(k, v)| k != 1 && v.norm_sqr() > NORM_TOLERANCE * NORM_TOLERANCE)
            {
                return Err(Error::Consistency("b register not in |0…01>".into()));
            }
            for (slot, p) in block.iter_mut().zip(&phi) {
                *slot = a * p;
            }
        }
        self.check_norm("b preparation")
    }

    /// `|x, y, b> -> |x, y, (b + shift(x, y)) mod 2^N>`.
    fn shift_b(&mut self, shift: impl Fn(usize, usize) -> Result<i64>) -> Result<()> {
        let dim = self.b_dim();
        let modulus = dim as i64;
        let ydim = self.y_dim();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (block_index, block) in self.amps.chunks(dim).enumerate() {
            let (x, y) = (block_index / ydim, block_index % ydim);
            let s = shift(x, y)?.rem_euclid(modulus) as usize;
            let base = block_index * dim;
            for (b, &a) in block.iter().enumerate() {
                out[base + (b + s) % dim] = a;
            }
        }
        self.amps = out;
        self.check_norm("oracle")
    }

    /// Frobenius distance between the state and `ψ ⊗ φ`, where `ψ` is the
    /// projection onto the phase state `φ` of the `b` register. Zero iff the
    /// state factorizes with `b` in `φ`.
    pub fn separability_defect(&self) -> f64 {
        let (psi, phi) = self.project_b();
        let dim = self.b_dim();
        let mut acc = 0.0;
        for (block, p) in self.amps.chunks(dim).zip(&psi) {
            for (a, f) in block.iter().zip(&phi) {
                acc += (a - p * f).norm_sqr();
            }
        }
        acc.sqrt()
    }

    fn project_b(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let phi = Self::phase_state(self.b_qubits);
        let psi = self
            .amps
            .chunks(self.b_dim())
            .map(|block| block.iter().zip(&phi).map(|(a, p)| a * p.conj()).sum())
            .collect();
        (psi, phi)
    }

    /// Drop the `b` register after verifying it is unentangled.
    fn discard_b(&mut self) -> Result<()> {
        let defect = self.separability_defect();
        if defect > NORM_TOLERANCE {
            return Err(Error::Consistency(format!(
                "b register is entangled (defect {defect:e})"
            )));
        }
        let (psi, _) = self.project_b();
        self.amps = psi;
        self.b_qubits = 0;
        self.check_norm("discarding b")
    }
}

/// Build `Σ_x exp(-2πi f(x)/2^N)/sqrt|X| |x>` by `H^⊗n ⊗ FFT` on `|0>|0…01>`
/// followed by the data oracle, then discard `b`.
pub fn prepare_phase_state(f: &DataTable, exponent: u32, cap: usize) -> Result<Registers> {
    let xq = log2_exact(f.len(), "domain")?;
    if exponent == 0 || exponent > 30 {
        return Err(Error::UnsupportedShape(format!("N = {exponent} outside 1..=30")));
    }
    check_cap(xq, 0, exponent, cap)?;
    let mut reg = Registers::basis(xq, 0, exponent, 1);
    reg.hadamard_x()?;
    reg.prepare_b()?;
    let values = f.values();
    reg.shift_b(|x, _| Ok(values[x]))?;
    reg.discard_b()?;
    Ok(reg)
}

/// Entangle the parameter register through `g`, drop `b`, and apply `H` to `x`.
/// The result holds amplitudes indexed by `(z, y)`.
pub fn apply_g_and_interfere(
    reg: &Registers,
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    exponent: u32,
    cap: usize,
) -> Result<Registers> {
    if reg.b_qubits != 0 || reg.y_qubits != 0 {
        return Err(Error::Precondition("expected a bare x register".into()));
    }
    if g.arity().params != space.arity() || g.arity().inputs != f.grid().ndim() {
        return Err(Error::Precondition("model arity does not match data and space".into()));
    }
    let yq = space.active_bits();
    check_cap(reg.x_qubits, yq, exponent, cap)?;
    let (xdim, ydim, bdim) = (1usize << reg.x_qubits, 1usize << yq, 1usize << exponent);
    let mut next = Registers {
        x_qubits: reg.x_qubits,
        y_qubits: yq,
        b_qubits: exponent,
        amps: vec![Complex64::new(0.0, 0.0); xdim * ydim * bdim],
    };
    for (x, a) in reg.amps.iter().enumerate() {
        next.amps[(x * ydim) * bdim + 1] = *a;
    }
    next.check_norm("register extension")?;
    next.hadamard_y()?;
    next.prepare_b()?;
    let xs: Vec<Vec<i64>> = f.grid().points().collect();
    let ys = space.enumerate().collect::<Vec<_>>();
    next.shift_b(|x, y| g.eval(&xs[x], &ys[y]).map(|v| v.wrapping_neg()))?;
    next.discard_b()?;
    next.hadamard_x()?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub z_is_zero_probability: f64,
    /// `None` when the `z = 0` probability is too small to condition on.
    pub conditional_y_distribution: Option<Vec<(Vec<i64>, f64)>>,
}

/// Exact `z = 0` probability and the renormalized distribution over `y`.
pub fn measure(reg: &Registers, space: &ParameterSpace) -> Result<MeasurementOutcome> {
    if reg.b_qubits != 0 || reg.y_qubits != space.active_bits() {
        return Err(Error::Precondition("register layout does not match the space".into()));
    }
    reg.check_norm("measurement")?;
    let ydim = reg.y_dim();
    let row: Vec<f64> = reg.amps[..ydim].iter().map(|a| a.norm_sqr()).collect();
    let p: f64 = row.iter().sum();
    let conditional = (p >= UNDEFINED_BELOW).then(|| {
        space
            .enumerate()
            .zip(&row)
            .map(|(y, &w)| (y, w / p))
            .collect()
    });
    Ok(MeasurementOutcome {
        z_is_zero_probability: p,
        conditional_y_distribution: conditional,
    })
}

/// Shot counts from seeded sampling of the full `(z, y)` distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledOutcome {
    pub shots: u64,
    pub z_zero: u64,
    /// Counts of each raw `y` among the `z = 0` shots.
    pub y_counts: Vec<u64>,
}

pub fn sample(reg: &Registers, shots: u64, seed: u64) -> Result<SampledOutcome> {
    let weights: Vec<f64> = reg.amps.iter().map(|a| a.norm_sqr()).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::Consistency(format!("cannot sample state: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ydim = reg.y_dim();
    let mut y_counts = vec![0u64; ydim];
    let mut z_zero = 0;
    for _ in 0..shots {
        let i = dist.sample(&mut rng);
        if i < ydim {
            z_zero += 1;
            y_counts[i] += 1;
        }
    }
    Ok(SampledOutcome {
        shots,
        z_zero,
        y_counts,
    })
}

/// Run the whole circuit and return the exact measurement statistics.
pub fn simulate(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    exponent: u32,
) -> Result<MeasurementOutcome> {
    let reg = prepare_phase_state(f, exponent, DEFAULT_AMPLITUDE_CAP)?;
    let out = apply_g_and_interfere(&reg, f, g, space, exponent, DEFAULT_AMPLITUDE_CAP)?;
    measure(&out, space)
}
