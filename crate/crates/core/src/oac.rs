//! Over-the-air majority vote: chirp vote encoding with non-coherent energy
//! detection, and the QPSK/truncated-channel-inversion baseline.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::BinVector;

/// Physical-layer aggregation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Error-free majority vote; no radio.
    Ideal,
    /// QPSK over OFDM with truncated channel inversion.
    Obda,
    /// Chirp majority vote with `votes` votes per symbol.
    CscMv { votes: usize },
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Ideal => write!(f, "ideal"),
            Scheme::Obda => write!(f, "obda"),
            Scheme::CscMv { votes } => write!(f, "csc_mv:{votes}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ideal" => Ok(Scheme::Ideal),
            "obda" => Ok(Scheme::Obda),
            other => {
                let votes = other
                    .strip_prefix("csc_mv:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|v| *v > 0)
                    .ok_or_else(|| {
                        Error::Argument(format!(
                            "unknown scheme '{other}' (expected ideal, obda or csc_mv:<votes>)"
                        ))
                    })?;
                Ok(Scheme::CscMv { votes })
            }
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

/// Votes that fit in one symbol of `bins` bins with `guard` guard bins per group.
pub fn votes_per_symbol(bins: usize, guard: usize) -> usize {
    bins / (2 + 2 * guard)
}

/// Largest guard that still carries `votes` votes per symbol.
pub fn guard_for_votes(bins: usize, votes: usize) -> Result<usize> {
    if votes == 0 || 2 * votes > bins {
        return Err(Error::Infeasible(format!(
            "{votes} votes do not fit in {bins} bins"
        )));
    }
    let guard = bins / (2 * votes) - 1;
    if votes_per_symbol(bins, guard) != votes {
        return Err(Error::Infeasible(format!(
            "no guard width gives exactly {votes} votes in {bins} bins"
        )));
    }
    Ok(guard)
}

/// Where one vote may land: the block and the first bin of its two groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteSlot {
    pub block: usize,
    pub plus_bin: usize,
    pub minus_bin: usize,
}

/// Fixed mapping of `q` votes onto blocks and bin groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotePlan {
    q: usize,
    bins: usize,
    guard: usize,
    votes_per_block: usize,
    blocks: usize,
}

impl VotePlan {
    pub fn new(q: usize, bins: usize, guard: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Argument("vote plan needs at least one vote".into()));
        }
        let votes_per_block = votes_per_symbol(bins, guard);
        if votes_per_block == 0 {
            return Err(Error::Infeasible(format!(
                "guard of {guard} bins leaves no room for a vote in {bins} bins"
            )));
        }
        Ok(Self {
            q,
            bins,
            guard,
            votes_per_block,
            blocks: q.div_ceil(votes_per_block),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn votes_per_block(&self) -> usize {
        self.votes_per_block
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Bins per group, the active bin plus its guard.
    pub fn group_len(&self) -> usize {
        1 + self.guard
    }

    /// Slot of vote `i` (zero-based).
    pub fn slot(&self, i: usize) -> VoteSlot {
        let u = i % self.votes_per_block;
        let g = self.group_len();
        VoteSlot {
            block: i / self.votes_per_block,
            plus_bin: 2 * u * g,
            minus_bin: (2 * u + 1) * g,
        }
    }

    /// Bins summed by the detector for a group starting at `first_bin`.
    pub fn group(&self, first_bin: usize) -> Range<usize> {
        first_bin..first_bin + self.group_len()
    }
}

/// One vote per gradient entry, each `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteVector {
    signs: Vec<i8>,
}

impl VoteVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(bad) = signs.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::Argument(format!("vote must be +1 or -1, got {bad}")));
        }
        Ok(Self { signs })
    }

    /// Signs of a real vector; zero maps to `+1`.
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            signs: values.iter().map(|v| sign(*v)).collect(),
        }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// `+1` for non-negative input, `-1` otherwise.
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Error-free majority vote over devices; ties go to `+1`.
pub fn majority_vote(votes: &[VoteVector]) -> Result<VoteVector> {
    let first = votes
        .first()
        .ok_or_else(|| Error::Argument("majority vote over zero devices".into()))?;
    let q = first.len();
    let mut tally = vec![0i64; q];
    for v in votes {
        if v.len() != q {
            return Err(Error::Framing {
                expected: q,
                actual: v.len(),
            });
        }
        for (t, s) in tally.iter_mut().zip(&v.signs) {
            *t += *s as i64;
        }
    }
    Ok(VoteVector {
        signs: tally.iter().map(|t| sign(*t as f64)).collect(),
    })
}

/// Detected votes with the energy margins `E⁺ − E⁻` they were decided from.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReport {
    pub mv: VoteVector,
    pub margins: Vec<f64>,
}

/// Places one random unit-circle symbol per vote in the group matching its sign.
pub fn encode_csc<R: Rng + ?Sized>(
    plan: &VotePlan,
    votes: &VoteVector,
    rng: &mut R,
) -> Result<Vec<BinVector>> {
    if votes.len() != plan.q {
        return Err(Error::Framing {
            expected: plan.q,
            actual: votes.len(),
        });
    }
    (0..plan.blocks)
        .map(|s| encode_csc_block(plan, votes, s, rng))
        .collect()
}

/// Block `block` of [`encode_csc`], drawing phases for that block's votes only.
pub fn encode_csc_block<R: Rng + ?Sized>(
    plan: &VotePlan,
    votes: &VoteVector,
    block: usize,
    rng: &mut R,
) -> Result<BinVector> {
    if votes.len() != plan.q {
        return Err(Error::Framing {
            expected: plan.q,
            actual: votes.len(),
        });
    }
    if block >= plan.blocks {
        return Err(Error::Argument(format!(
            "block {block} out of range for a plan of {} blocks",
            plan.blocks
        )));
    }
    let mut out = BinVector::zeros(plan.bins);
    let first = block * plan.votes_per_block;
    let last = (first + plan.votes_per_block).min(plan.q);
    for i in first..last {
        let slot = plan.slot(i);
        let bin = if votes.signs[i] > 0 {
            slot.plus_bin
        } else {
            slot.minus_bin
        };
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        out.values_mut()[bin] = Complex64::from_polar(1.0, phase);
    }
    Ok(out)
}

/// Non-coherent energy comparison between the two groups of each vote.
pub fn detect_mv(plan: &VotePlan, blocks: &[BinVector]) -> Result<DetectorReport> {
    if blocks.len() != plan.blocks {
        return Err(Error::Framing {
            expected: plan.blocks,
            actual: blocks.len(),
        });
    }
    if let Some(b) = blocks.iter().find(|b| b.len() != plan.bins) {
        return Err(Error::Framing {
            expected: plan.bins,
            actual: b.len(),
        });
    }
    let energy = |block: &BinVector, first: usize| -> f64 {
        block.values()[plan.group(first)]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    };
    let margins: Vec<f64> = (0..plan.q)
        .map(|i| {
            let slot = plan.slot(i);
            let block = &blocks[slot.block];
            energy(block, slot.plus_bin) - energy(block, slot.minus_bin)
        })
        .collect();
    Ok(DetectorReport {
        mv: VoteVector::from_values(&margins),
        margins,
    })
}

/// Truncated channel inversion: `h*/|h|²` where `|h|` reaches
/// `threshold · rms(|h|)`, zero elsewhere.
pub fn tci_precoder(response: &[Complex64], threshold: f64) -> Vec<Complex64> {
    let rms =
        (response.iter().map(|h| h.norm_sqr()).sum::<f64>() / response.len().max(1) as f64).sqrt();
    response
        .iter()
        .map(|h| {
            let mag2 = h.norm_sqr();
            if mag2 > 0.0 && h.norm() >= threshold * rms {
                h.conj() / mag2
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Number of OFDM symbols the baseline needs for `q` votes on `bins` subcarriers.
pub fn obda_blocks(q: usize, bins: usize) -> usize {
    q.div_ceil(2).div_ceil(bins)
}

/// Pairs of votes as QPSK on consecutive subcarriers, precoded by truncated
/// channel inversion of `response` (one coefficient per subcarrier, constant
/// over the round). Each block keeps the energy it had before precoding.
pub fn encode_obda(
    votes: &VoteVector,
    response: &[Complex64],
    threshold: f64,
) -> Result<Vec<BinVector>> {
    let bins = response.len();
    if bins == 0 {
        return Err(Error::Argument("empty channel response".into()));
    }
    let precoder = tci_precoder(response, threshold);
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let symbols: Vec<Complex64> = votes
        .signs
        .chunks(2)
        .map(|pair| {
            let re = pair[0] as f64 * amp;
            let im = pair.get(1).map_or(0.0, |s| *s as f64 * amp);
            Complex64::new(re, im)
        })
        .collect();
    Ok(symbols
        .chunks(bins)
        .map(|chunk| {
            let budget: f64 = chunk.iter().map(|x| x.norm_sqr()).sum();
            let mut values: Vec<Complex64> =
                chunk.iter().zip(&precoder).map(|(x, p)| x * p).collect();
            values.resize(bins, Complex64::new(0.0, 0.0));
            let energy: f64 = values.iter().map(|v| v.norm_sqr()).sum();
            if energy > 0.0 {
                let g = (budget / energy).sqrt();
                values.iter_mut().for_each(|v| *v *= g);
            }
            BinVector::new(values)
        })
        .collect())
}

/// Signs of the real and imaginary parts of the superposed subcarriers.
pub fn decode_obda(q: usize, received: &[BinVector]) -> Result<VoteVector> {
    let bins = received.first().map_or(0, |b| b.len());
    let expected = obda_blocks(q, bins.max(1));
    if received.len() != expected || bins == 0 {
        return Err(Error::Framing {
            expected,
            actual: received.len(),
        });
    }
    let signs = received
        .iter()
        .flat_map(|b| b.values().iter())
        .flat_map(|z| [sign(z.re), sign(z.im)])
        .take(q)
        .collect();
    Ok(VoteVector { signs })
}
