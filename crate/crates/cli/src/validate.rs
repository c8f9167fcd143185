//! Oracle checks runnable from the command line.

use marc_core::channel::{sample_rayleigh, MarcConfig, SuperChannel};
use marc_core::codec::compute_gdfe;
use marc_core::lattice::{ConstructionA, NestedLatticeCode};
use marc_core::linalg::{relative_frobenius, RMatrix, RVector};
use marc_core::mapper::{MapperKind, RelayMapper};
use marc_core::rates::{outage_indicator, region_inclusion_check, DecoderKind, RateRegionSpec, Scheme};
use marc_core::rng::stream_rng;
use marc_core::sim::{build_codes, SimPlan};
use marc_core::sphere::{sphere_decode, SearchConfig};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    Sphere,
    Gdfe,
    Region,
    Mapper,
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub seed: u64,
    pub break_gdfe: bool,
    pub exhaustive_tau: u64,
}

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

const BRUTE_BOX: i64 = 5;
const GDFE_TOL: f64 = 1e-9;
const TUPLE_LIMIT: u64 = 4096;

pub fn run(suite: Suite, opts: Options) -> Result<Vec<Check>, String> {
    let mut out = Vec::new();
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Sphere) {
        out.push(sphere(opts.seed));
    }
    if want(Suite::Gdfe) {
        out.push(gdfe(opts.seed, opts.break_gdfe)?);
    }
    if want(Suite::Region) {
        out.extend(region(opts.seed)?);
    }
    if want(Suite::Mapper) {
        out.extend(mapper(opts.seed, opts.exhaustive_tau)?);
    }
    Ok(out)
}

fn brute_force(basis: &RMatrix, target: &RVector) -> f64 {
    let n = basis.ncols();
    let mut z = vec![-BRUTE_BOX; n];
    let mut best = f64::INFINITY;
    loop {
        let v = RVector::from_iterator(n, z.iter().map(|&x| x as f64));
        best = best.min((target - basis * v).norm_squared());
        let Some(i) = z.iter().position(|&x| x < BRUTE_BOX) else {
            return best;
        };
        z[..i].fill(-BRUTE_BOX);
        z[i] += 1;
    }
}

fn sphere(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 11);
    let instances = 60;
    let mut mismatches = 0;
    for inst in 0..instances {
        let n = 1 + inst % 5;
        let basis = RMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) + 0.5 * (rng.random::<f64>() - 0.5));
        let target = RVector::from_fn(n, |_, _| rng.random_range(-2.5..2.5));
        let d = match sphere_decode(&basis, &target, SearchConfig::unbounded()) {
            Ok(c) => c.distance_sq,
            Err(_) => f64::INFINITY,
        };
        if (d - brute_force(&basis, &target)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    Check {
        name: "sphere-vs-brute-force".into(),
        pass: mismatches == 0,
        detail: format!("{instances} instances, {mismatches} mismatches"),
    }
}

fn gdfe(seed: u64, broken: bool) -> Result<Check, String> {
    let mut rng = stream_rng(seed, 12);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let cfg = MarcConfig {
            relay_antennas: 1 + i % 2,
            dest_antennas: 1 + (i / 2) % 2,
            ..MarcConfig::default()
        }
        .at_snr(rng.random_range(0.0..40.0));
        let real = sample_rayleigh(&cfg, &mut rng);
        let h = SuperChannel::assemble(&real, 1, &cfg).map_err(|e| e.to_string())?.h_dst;
        let mut g = compute_gdfe(&h).map_err(|e| e.to_string())?;
        if broken {
            g.b[(0, 0)] *= 1.0 + 1e-3;
        }
        let gram = RMatrix::identity(h.ncols(), h.ncols()) + h.transpose() * &h;
        worst = worst.max(relative_frobenius(&(g.b.transpose() * &g.b), &gram));
    }
    Ok(Check {
        name: "gdfe-identity".into(),
        pass: worst <= GDFE_TOL,
        detail: format!("100 channels, worst relative error {worst:.2e}"),
    })
}

fn region(seed: u64) -> Result<Vec<Check>, String> {
    let mut rng = stream_rng(seed, 13);
    let base = MarcConfig::default();
    let (mut os, mut ms) = (0, 0);
    let draws = 200;
    for i in 0..draws {
        let cfg = base.at_snr(5.0 * (i % 7) as f64);
        let real = sample_rayleigh(&cfg, &mut rng);
        let r = region_inclusion_check(&real, &cfg, 100, &mut rng).map_err(|e| e.to_string())?;
        os += r.one_stage_violations;
        ms += r.modulo_sum_violations;
    }
    let spec = |s, d, relay| {
        let mut spec = RateRegionSpec::from_config(&base, s, d).expect("default rates are valid");
        spec.relay_rate = relay;
        spec
    };
    let k_stage = spec(Scheme::Omlc, DecoderKind::KStage, base.relay_rate);
    let others = [
        spec(Scheme::Omlc, DecoderKind::OneStage, base.relay_rate),
        spec(Scheme::Msmlc, DecoderKind::KStage, 2.0),
    ];
    let mut counter = 0;
    let paired = 10_000;
    for i in 0..paired {
        let cfg = base.at_snr(5.0 * (i % 7) as f64);
        let real = sample_rayleigh(&cfg, &mut rng);
        let a = outage_indicator(&real, &k_stage, &cfg).map_err(|e| e.to_string())?.in_outage;
        for o in &others {
            if a && !outage_indicator(&real, o, &cfg).map_err(|e| e.to_string())?.in_outage {
                counter += 1;
            }
        }
    }
    Ok(vec![
        Check {
            name: "region-inclusion".into(),
            pass: os == 0 && ms == 0,
            detail: format!("{draws} channels x 100 rate points: one-stage {os}, modulo-sum {ms} violations"),
        },
        Check {
            name: "outage-dominance".into(),
            pass: counter == 0,
            detail: format!("{paired} paired draws: {counter} counterexamples"),
        },
    ])
}

fn small_code(n: usize, tau: u64, rng: &mut impl Rng) -> Result<NestedLatticeCode, String> {
    let c = ConstructionA::random(n, 7, n.min(2), 0.3, rng).map_err(|e| e.to_string())?;
    NestedLatticeCode::new(c, 2.0 * (tau as f64).log2(), 1).map_err(|e| e.to_string())
}

fn mapper(seed: u64, tau: u64) -> Result<Vec<Check>, String> {
    let mut checks = Vec::new();
    let mut rng = stream_rng(seed, 14);
    for scheme in [Scheme::Omlc, Scheme::Msmlc] {
        let mut plan = SimPlan::coded_default(scheme);
        plan.master_seed = seed;
        let m = build_codes(&plan).map_err(|e| e.to_string())?;
        let g = m.super_generator().map_err(|e| e.to_string())?.matrix;
        let ok = m.coset_consistency_check(&g, 1000, &mut rng);
        checks.push(Check {
            name: format!("coset-consistency-{scheme}"),
            pass: ok,
            detail: "1000 random points".into(),
        });
    }
    if tau < 2 {
        return Err(format!("--exhaustive-tau must be at least 2, got {tau}"));
    }
    // largest per-user length with tau^(2n) tuples within the limit
    let mut n = 1usize;
    while tau.checked_pow(2 * (n as u32 + 1)).is_some_and(|t| t <= TUPLE_LIMIT) {
        n += 1;
    }
    if tau.checked_pow(2 * n as u32).is_none_or(|t| t > TUPLE_LIMIT) {
        return Err(format!("tau {tau} gives more than {TUPLE_LIMIT} index tuples"));
    }
    for (kind, label, relay_len) in [(MapperKind::OneToOneLinear, "omlc", 2 * n), (MapperKind::ModuloSum, "msmlc", n)] {
        let users = vec![small_code(n, tau, &mut rng)?, small_code(n, tau, &mut rng)?];
        let m = RelayMapper::new(kind, users, small_code(relay_len, tau, &mut rng)?).map_err(|e| e.to_string())?;
        let (tuples, distinct) = m.enumerate_images(TUPLE_LIMIT).ok_or("enumeration limit exceeded")?;
        let expected = match kind {
            MapperKind::OneToOneLinear => tuples,
            MapperKind::ModuloSum => tau.pow(n as u32),
        };
        let violations = expected.abs_diff(distinct);
        checks.push(Check {
            name: format!("exhaustive-{label}"),
            pass: violations == 0,
            detail: format!("tau {tau}, n {n}: {tuples} tuples, {distinct} relay indices, {violations} violations"),
        });
    }
    Ok(checks)
}
