//! Dithered lattice encoding, MMSE-GDFE preprocessing and coset decoders.

use rand::Rng;

use crate::channel::SuperChannel;
use crate::error::{Error, Result};
use crate::lattice::NestedLatticeCode;
use crate::linalg::{select_columns, upper_cholesky, RMatrix, RVector};
use crate::mapper::{RelayMapper, SuperGenerator};
use crate::rates::DecoderKind;
use crate::sphere::{sphere_decode, ClosestPoint, SearchConfig};

/// What one transmitter sends for one message.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitState {
    pub dither: RVector,
    pub leader: RVector,
    /// `(leader - dither) mod Lambda_S`.
    pub x: RVector,
}

/// Channel input `(coset_leader(z_msg) - u) mod Lambda_S`.
pub fn encode(code: &NestedLatticeCode, z_msg: &[i64], dither: &RVector) -> Result<RVector> {
    Ok(transmit(code, z_msg, dither)?.x)
}

pub fn transmit(code: &NestedLatticeCode, z_msg: &[i64], dither: &RVector) -> Result<TransmitState> {
    if dither.len() != code.dim() {
        return Err(Error::Argument(format!(
            "dither has length {}, code dimension is {}",
            dither.len(),
            code.dim()
        )));
    }
    let leader = code.index_to_coset_leader(z_msg)?;
    let x = code.shaping().mod_lattice(&(&leader - dither));
    Ok(TransmitState {
        dither: dither.clone(),
        leader,
        x,
    })
}

/// Dithers shared by all transmitters and receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dithers {
    pub users: Vec<RVector>,
    pub relay: RVector,
}

impl Dithers {
    pub fn sample<R: Rng + ?Sized>(mapper: &RelayMapper, rng: &mut R) -> Self {
        Self {
            users: mapper.user_codes().iter().map(|c| c.sample_dither(rng)).collect(),
            relay: mapper.relay_code().sample_dither(rng),
        }
    }

    pub fn zeros(mapper: &RelayMapper) -> Self {
        Self {
            users: mapper.user_codes().iter().map(|c| RVector::zeros(c.dim())).collect(),
            relay: RVector::zeros(mapper.relay_code().dim()),
        }
    }

    fn stacked(&self, users: &[usize], with_relay: bool) -> RVector {
        let parts: Vec<&RVector> = users
            .iter()
            .map(|&i| &self.users[i])
            .chain(with_relay.then_some(&self.relay))
            .collect();
        stack(&parts)
    }
}

fn stack(parts: &[&RVector]) -> RVector {
    let n = parts.iter().map(|p| p.len()).sum();
    RVector::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

/// Transmit signals of every user and of the relay for one message tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub users: Vec<TransmitState>,
    pub relay: TransmitState,
    pub relay_index: Vec<i64>,
}

impl Transmission {
    pub fn new(mapper: &RelayMapper, messages: &[Vec<i64>], dithers: &Dithers) -> Result<Self> {
        let relay_index = mapper.map_indices(messages)?;
        let users = mapper
            .user_codes()
            .iter()
            .zip(messages)
            .zip(&dithers.users)
            .map(|((c, m), u)| transmit(c, m, u))
            .collect::<Result<Vec<_>>>()?;
        let relay = transmit(mapper.relay_code(), &relay_index, &dithers.relay)?;
        Ok(Self {
            users,
            relay,
            relay_index,
        })
    }

    /// `[x_1; ...; x_K]`, plus `x_r` when `with_relay`.
    pub fn stacked(&self, with_relay: bool) -> RVector {
        let parts: Vec<&RVector> = self
            .users
            .iter()
            .map(|t| &t.x)
            .chain(with_relay.then_some(&self.relay.x))
            .collect();
        stack(&parts)
    }
}

/// MMSE-GDFE forward and feedback filters.
#[derive(Debug, Clone, PartialEq)]
pub struct GdfeFilters {
    /// Forward filter `B^-T H^T`.
    pub f: RMatrix,
    /// Upper-triangular feedback filter with `B^T B = I + H^T H`.
    pub b: RMatrix,
}

pub fn compute_gdfe(h: &RMatrix) -> Result<GdfeFilters> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("channel matrix has non-finite entries".into()));
    }
    let m = h.ncols();
    let b = upper_cholesky(&(RMatrix::identity(m, m) + h.transpose() * h))?;
    let f = b
        .transpose()
        .solve_lower_triangular(&h.transpose())
        .ok_or_else(|| Error::Numerical("feedback filter is singular".into()))?;
    Ok(GdfeFilters { f, b })
}

impl GdfeFilters {
    /// Coset metric `|F y + B (u - c)|^2`.
    pub fn metric(&self, y: &RVector, u: &RVector, c: &RVector) -> f64 {
        (&self.f * y + &self.b * (u - c)).norm_squared()
    }
}

/// Closest super-lattice point under the GDFE metric:
/// `argmin_z |F y + B u - B (G z + offset)|^2`.
pub fn one_stage_decode(
    y: &RVector,
    generator: &SuperGenerator,
    filters: &GdfeFilters,
    u: &RVector,
    search: SearchConfig,
) -> Result<ClosestPoint> {
    let target = &filters.f * y + &filters.b * (u - &generator.offset);
    let basis = &filters.b * &generator.matrix;
    sphere_decode(&basis, &target, search)
}

/// Outcome of one node of the decoding tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeNodeResult {
    /// Stage `k`, starting at 1 for the root.
    pub stage: usize,
    /// Position `j` from the left within the stage, starting at 1.
    pub index: usize,
    /// Users assumed decoded along the path, in path order (0-based).
    pub previous: Vec<usize>,
    /// Decoded messages of the residual users, `None` if the search failed.
    pub decoded: Option<Vec<(usize, Vec<i64>)>>,
    /// Coset metric of the decoded point (infinite on failure).
    pub metric: f64,
    pub budget_exhausted: bool,
}

/// Final decision of a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Messages of all users, or `None` if every candidate failed.
    pub messages: Option<Vec<Vec<i64>>>,
    /// `|y - H x_hat|^2` of the chosen candidate.
    pub distance: f64,
    pub nodes: Vec<DecodeNodeResult>,
    pub budget_exhausted: bool,
}

/// A received block and everything a receiver knows about it.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub y: &'a RVector,
    /// Columns: user codewords in order, then the relay codeword when
    /// `with_relay`.
    pub h: &'a RMatrix,
    pub mapper: &'a RelayMapper,
    pub dithers: &'a Dithers,
    pub with_relay: bool,
    pub search: SearchConfig,
}

impl Observation<'_> {
    fn check(&self) -> Result<()> {
        let users: usize = self.mapper.user_codes().iter().map(NestedLatticeCode::dim).sum();
        let cols = users + if self.with_relay { self.mapper.relay_code().dim() } else { 0 };
        if self.h.ncols() != cols || self.h.nrows() != self.y.len() {
            return Err(Error::Argument(format!(
                "channel is {}x{}, expected {}x{cols}",
                self.h.nrows(),
                self.h.ncols(),
                self.y.len()
            )));
        }
        Ok(())
    }

    fn user_columns(&self, i: usize) -> (usize, usize) {
        let codes = self.mapper.user_codes();
        (codes[..i].iter().map(NestedLatticeCode::dim).sum(), codes[i].dim())
    }

    fn relay_columns(&self) -> (usize, usize) {
        let start = self.mapper.user_codes().iter().map(NestedLatticeCode::dim).sum();
        (start, self.mapper.relay_code().dim())
    }

    fn decode_node(&self, previous: &[usize], known: &[(usize, Vec<i64>)]) -> Result<(Option<Vec<(usize, Vec<i64>)>>, f64, bool)> {
        let k = self.mapper.users();
        let residual: Vec<usize> = (0..k).filter(|i| !previous.contains(i)).collect();
        let mut y = self.y.clone();
        for (i, w) in known {
            let x = encode(self.mapper.user_code(*i), w, &self.dithers.users[*i])?;
            let (start, width) = self.user_columns(*i);
            y -= self.h.columns(start, width) * x;
        }
        let generator = self.mapper.residual_generator(&residual, known, self.with_relay)?;
        let mut ranges: Vec<(usize, usize)> = residual.iter().map(|&i| self.user_columns(i)).collect();
        if self.with_relay {
            ranges.push(self.relay_columns());
        }
        let filters = compute_gdfe(&select_columns(self.h, &ranges))?;
        let u = self.dithers.stacked(&residual, self.with_relay);
        match one_stage_decode(&y, &generator, &filters, &u, self.search) {
            Ok(cp) => {
                let decoded = residual.iter().copied().zip(generator.messages(&cp.z)).collect();
                Ok((Some(decoded), cp.distance_sq, false))
            }
            Err(Error::SearchBudget { .. }) => Ok((None, f64::INFINITY, true)),
            Err(e) => Err(e),
        }
    }

    fn candidate_distance(&self, messages: &[Vec<i64>]) -> Result<f64> {
        let t = Transmission::new(self.mapper, messages, self.dithers)?;
        Ok((self.y - self.h * t.stacked(self.with_relay)).norm_squared())
    }

    /// Runs the decoding tree down to `depth` stages (1 for one-stage
    /// decoding, `K` for the full tree) and applies the nearest-candidate
    /// rule to the leaves.
    fn run(&self, depth: usize) -> Result<Decoded> {
        self.check()?;
        let k = self.mapper.users();
        let mut nodes = Vec::new();
        let mut leaves: Vec<Option<Vec<Vec<i64>>>> = Vec::new();
        let mut per_stage = vec![0usize; depth + 1];
        self.visit(1, depth, &mut Vec::new(), &mut Vec::new(), &mut per_stage, &mut nodes, &mut leaves)?;
        let mut best: Option<(f64, Vec<Vec<i64>>)> = None;
        for leaf in leaves.into_iter().flatten() {
            debug_assert_eq!(leaf.len(), k);
            let d = self.candidate_distance(&leaf)?;
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, leaf));
            }
        }
        let budget_exhausted = nodes.iter().any(|n: &DecodeNodeResult| n.budget_exhausted);
        Ok(match best {
            Some((distance, messages)) => Decoded {
                messages: Some(messages),
                distance,
                nodes,
                budget_exhausted,
            },
            None => Decoded {
                messages: None,
                distance: f64::INFINITY,
                nodes,
                budget_exhausted,
            },
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &self,
        stage: usize,
        depth: usize,
        previous: &mut Vec<usize>,
        known: &mut Vec<(usize, Vec<i64>)>,
        per_stage: &mut [usize],
        nodes: &mut Vec<DecodeNodeResult>,
        leaves: &mut Vec<Option<Vec<Vec<i64>>>>,
    ) -> Result<()> {
        per_stage[stage] += 1;
        let (decoded, metric, exhausted) = self.decode_node(previous, known)?;
        nodes.push(DecodeNodeResult {
            stage,
            index: per_stage[stage],
            previous: previous.clone(),
            decoded: decoded.clone(),
            metric,
            budget_exhausted: exhausted,
        });
        let k = self.mapper.users();
        if stage == depth {
            leaves.push(decoded.map(|d| {
                let mut all = vec![Vec::new(); k];
                for (i, w) in known.iter().chain(&d) {
                    all[*i] = w.clone();
                }
                all
            }));
            return Ok(());
        }
        let residual: Vec<usize> = (0..k).filter(|i| !previous.contains(i)).collect();
        let Some(decoded) = decoded else {
            // every leaf below a failed node is a failed candidate
            let below: usize = (0..depth - stage).map(|m| residual.len() - m).product();
            leaves.extend(std::iter::repeat_n(None, below));
            return Ok(());
        };
        for (user, w) in decoded {
            previous.push(user);
            known.push((user, w));
            self.visit(stage + 1, depth, previous, known, per_stage, nodes, leaves)?;
            previous.pop();
            known.pop();
        }
        Ok(())
    }
}

/// The `K`-stage tree decoder: successive cancellation along every user
/// ordering followed by nearest-candidate selection among the `K!` leaves.
pub fn k_stage_decode(obs: &Observation<'_>) -> Result<Decoded> {
    obs.run(obs.mapper.users())
}

/// Joint coset decoding of all users (and the relay) in one search.
pub fn one_stage_coset_decode(obs: &Observation<'_>) -> Result<Decoded> {
    obs.run(1)
}

pub fn decode(obs: &Observation<'_>, kind: DecoderKind) -> Result<Decoded> {
    match kind {
        DecoderKind::KStage => k_stage_decode(obs),
        DecoderKind::OneStage => one_stage_coset_decode(obs),
    }
}

/// Decodes the users at the relay from its observation over the users'
/// full codewords (no relay codebook involved).
pub fn relay_decode(
    y_relay: &RVector,
    h_relay: &RMatrix,
    mapper: &RelayMapper,
    dithers: &Dithers,
    kind: DecoderKind,
    search: SearchConfig,
) -> Result<Decoded> {
    decode(
        &Observation {
            y: y_relay,
            h: h_relay,
            mapper,
            dithers,
            with_relay: false,
            search,
        },
        kind,
    )
}

/// Genie-aided DDF rule: the relay listens slot by slot and starts
/// forwarding after the first slot in which it decodes every user
/// correctly. Returns the decision slot (`L` when it never succeeds).
///
/// `relay_noise` covers all `L T` symbols; the first `ell T` are used after
/// `ell` slots.
pub fn relay_decision(
    channel: &SuperChannel,
    mapper: &RelayMapper,
    dithers: &Dithers,
    sent: &Transmission,
    messages: &[Vec<i64>],
    relay_noise: &RVector,
    kind: DecoderKind,
    search: SearchConfig,
) -> Result<usize> {
    let slots = channel.config().slots;
    let x = sent.stacked(false);
    for ell in 1..slots {
        let h = channel.relay_full_width(ell)?;
        let y = &h * &x + relay_noise.rows(0, h.nrows());
        let d = relay_decode(&y, &h, mapper, dithers, kind, search)?;
        if d.messages.as_deref() == Some(messages) {
            return Ok(ell);
        }
    }
    Ok(slots)
}
