//! One function per suite. Each reads only the scenario and its own seeded
//! streams, so suites can run in any order or in parallel.

use rayon::prelude::*;
use serde_json::json;
use sqfn_core::dyadic::{
    decompose_universe, dilate_family, verify_sparse, whitney_cover, whitney_member_ok, DyadicInterval, GridInterval,
    SparseFamily, WhitneyParams,
};
use sqfn_core::error::Result;
use sqfn_core::fourier::{
    self, dft, dft_projection, BandFamily, ComplexSignal, Multiplier, PacketFamily, DEFAULT_ORDER,
};
use sqfn_core::radial::{self, RadialWeight};
use sqfn_core::rng::{below, cascade_signal, gaussian_signal, uniform, SplitMix64};
use sqfn_core::signal::Signal;
use sqfn_core::sparse::{
    build_sparse_from_carleson, carleson_norm, good_lambda_check, principal_family, sparse_operator, verify_pointwise_domination,
    weak_type_ratio, CarlesonSeq, DominationModel, Localization, SparseConstruction, SparseKind, StoppingParams,
};
use sqfn_core::stats::fit_loglog;
use sqfn_core::walsh::{
    self, bessel_check, cww_comparison, layer_cake_bound_check, martingale_probe, tree_identity, tree_identity_check,
    up_pieces, walsh_projection, weighted_operator_norm, wht, wht_exact, FreqFamily, TileTable,
};
use sqfn_core::weights::{weight_family, WeightGrid, WeightKind};

use crate::report::{CheckResult as C, Sense, SuiteOutput, Table};
use crate::scenario::{Resolved, Scenario, SequenceSource, Suite};

/// Packets per tile in the Fourier models.
pub const PACKETS: usize = 8;
pub const GAMMAS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const POWER_ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
/// Exponents of the power weights in the operator norm sweep.
pub const SWEEP_ALPHAS: [f64; 8] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
pub const POWER_ITERATIONS: usize = 60;
pub const CASCADE_SIGMA: f64 = 0.8;

pub fn run(suite: Suite, sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    match suite {
        Suite::Identities => identities(sc, res),
        Suite::Bessel => bessel(sc, res),
        Suite::LayerCake => layer_cake(sc, res),
        Suite::Stopping => stopping(sc, res),
        Suite::GoodLambda => good_lambda(sc, res),
        Suite::OperatorNorm => operator_norm(sc, res),
        Suite::Radial => radial_suite(sc, res),
        Suite::Domination => domination(sc, res),
        Suite::Structural => structural(sc, res),
        Suite::Weights => weights(sc, res),
        Suite::Fourier => fourier_suite(sc, res),
    }
}

fn stream(sc: &Scenario, suite: Suite) -> SplitMix64 {
    SplitMix64::new(sc.seed).fork(suite as u64 + 1)
}

fn walsh_omega(res: &Resolved, n: u32, rng: &mut SplitMix64) -> FreqFamily {
    res.walsh_omega().cloned().unwrap_or_else(|| FreqFamily::random(n, 6, rng))
}

fn band_omega(res: &Resolved, n: u32, rng: &mut SplitMix64) -> BandFamily {
    res.fourier_omega().cloned().unwrap_or_else(|| BandFamily::random(n, 6, rng))
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn sup_diff(a: &Signal, b: &Signal) -> f64 {
    max_of(a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()))
}

// ---------------------------------------------------------------------------

#[derive(Default)]
struct IdentityErrors {
    parseval: f64,
    exact: bool,
    idempotence: f64,
    orthogonality: f64,
    tree: f64,
    tree_upper: f64,
    square: f64,
    martingale: f64,
    eps: f64,
}

fn identities(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "identities";
    let n = sc.n;
    let base = stream(sc, Suite::Identities);
    let errs: Vec<IdentityErrors> = (0..sc.samples_or(100))
        .into_par_iter()
        .map(|i| -> Result<IdentityErrors> {
            let mut rng = base.fork(i as u64);
            let f = gaussian_signal(n, &mut rng);
            let omega = walsh_omega(res, n, &mut rng);
            let energy = f.norm_sq();
            let norm = energy.sqrt();
            let mut e = IdentityErrors {
                parseval: (wht(&f).energy() - energy).abs() / energy,
                ..Default::default()
            };

            let ints: Vec<i64> = f.samples().iter().map(|v| (v * 1048576.0).round() as i64).collect();
            let h = wht_exact(&ints)?;
            let lhs: i128 = h.iter().map(|&v| v as i128 * v as i128).sum();
            let rhs: i128 = ints.iter().map(|&v| v as i128 * v as i128).sum::<i128>() * ints.len() as i128;
            e.exact = lhs == rhs;

            let parts: Vec<Signal> = omega
                .omegas()
                .iter()
                .map(|&(k, m)| walsh_projection(&f, k, m))
                .collect::<Result<_>>()?;
            for (part, &(k, m)) in parts.iter().zip(omega.omegas()) {
                e.idempotence = e.idempotence.max(sup_diff(&walsh_projection(part, k, m)?, part) / norm);
            }
            for a in 0..parts.len() {
                for b in a + 1..parts.len() {
                    e.orthogonality = e.orthogonality.max(parts[a].inner(&parts[b]).abs() / energy);
                }
            }

            for &(k, m) in omega.omegas() {
                let r = tree_identity_check(&f, k, m)?;
                e.tree = e.tree.max(r.discrepancy / norm);
                let up = up_pieces(k, m);
                if k > 0 && !up.is_empty() {
                    let r = tree_identity(&f, &up, k - 1)?;
                    e.tree_upper = e.tree_upper.max(r.discrepancy / norm);
                }
            }

            let scale = below(&mut rng, n as u64 + 1) as i32;
            let q = DyadicInterval::standard(scale, below(&mut rng, 1 << scale) as i64);
            let family = dilate_family(&q, n)?;
            let g = sparse_operator(&f, &family, 2.0, SparseKind::Square, Localization::Untailed)?;
            let t = sparse_operator(&f.map(|v| v * v), &family, 1.0, SparseKind::Linear, Localization::Untailed)?;
            e.square = sup_diff(&g, &t.map(f64::sqrt)) / g.sup();

            let b = below(&mut rng, f.len() as u64 - 1) as usize;
            let probe = martingale_probe(&f, b)?;
            e.martingale = probe.discrepancy / norm;
            e.eps = probe.eps_residual;
            Ok(e)
        })
        .collect::<Result<_>>()?;

    let tol = sc.tolerances.identity;
    let mut out = SuiteOutput::default();
    let worst = |pick: fn(&IdentityErrors) -> f64| max_of(errs.iter().map(pick));
    out.check(C::asserted(S, "walsh_parseval", worst(|e| e.parseval), Sense::AtMost, tol));
    out.check(C::flag(S, "walsh_parseval_exact", errs.iter().all(|e| e.exact)));
    out.check(C::asserted(S, "projection_idempotence", worst(|e| e.idempotence), Sense::AtMost, tol));
    out.check(C::asserted(S, "projection_orthogonality", worst(|e| e.orthogonality), Sense::AtMost, tol));
    out.check(C::asserted(S, "tree_identity", worst(|e| e.tree), Sense::AtMost, tol));
    out.check(C::asserted(S, "tree_identity_upper", worst(|e| e.tree_upper), Sense::AtMost, tol));
    out.check(C::asserted(S, "square_sparse_identity", worst(|e| e.square), Sense::AtMost, tol));
    out.check(C::asserted(S, "martingale_probe", worst(|e| e.martingale), Sense::AtMost, tol));
    out.check(C::asserted(S, "martingale_eps_integrality", worst(|e| e.eps), Sense::AtMost, tol));
    Ok(out)
}

// ---------------------------------------------------------------------------

fn bessel(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "bessel";
    let n = sc.n;
    let base = stream(sc, Suite::Bessel);
    let slacks: Vec<f64> = (0..sc.samples_or(50))
        .into_par_iter()
        .map(|i| {
            let mut rng = base.fork(i as u64);
            let f = gaussian_signal(n, &mut rng);
            let omega = walsh_omega(res, n, &mut rng);
            bessel_check(&f, &TileTable::new(&f), &omega.pieces()).min_slack
        })
        .collect();
    let mut out = SuiteOutput::default();
    out.check(C::asserted(S, "bessel_min_slack", min_of(slacks), Sense::AtLeast, -sc.tolerances.bessel));
    Ok(out)
}

// ---------------------------------------------------------------------------

fn weight_cycle(res: &Resolved) -> Vec<WeightKind> {
    match res.weight {
        Some(w) => vec![w],
        None => vec![
            WeightKind::Power(0.25),
            WeightKind::Power(0.5),
            WeightKind::Power(0.75),
            WeightKind::Radial(0.5),
            WeightKind::LogNormal(0.5),
            WeightKind::Constant,
        ],
    }
}

fn layer_cake(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "layer_cake";
    let n = sc.n;
    let kinds = weight_cycle(res);
    let base = stream(sc, Suite::LayerCake);
    let rows: Vec<(walsh::LayerCakeReport, walsh::CwwReport)> = (0..sc.samples_or(20))
        .into_par_iter()
        .map(|i| {
            let mut rng = base.fork(i as u64);
            let f = gaussian_signal(n, &mut rng);
            let omega = walsh_omega(res, n, &mut rng);
            let w = weight_family(kinds[i % kinds.len()], n, &mut rng)?;
            Ok((layer_cake_bound_check(&f, &w, &omega.pieces())?, cww_comparison(&f, &w, &omega)?))
        })
        .collect::<Result<_>>()?;

    let tol = sc.tolerances.layer_cake;
    let mut out = SuiteOutput::default();
    out.check(C::asserted(S, "layer_cake_ratio", max_of(rows.iter().map(|r| r.0.ratio)), Sense::AtMost, 1.0 + tol));
    let identity = max_of(rows.iter().map(|(r, _)| (r.direct - r.layer_cake).abs() / r.direct.max(f64::MIN_POSITIVE)));
    out.check(C::asserted(S, "layer_cake_identity", identity, Sense::AtMost, tol));
    let chain = max_of(rows.iter().map(|(r, _)| {
        let a = (r.layer_cake - r.maximal_intervals) / r.maximal_intervals;
        let b = (r.maximal_intervals - r.bessel_bound) / r.bessel_bound;
        let c = (r.bessel_bound - r.maximal_bound) / r.maximal_bound;
        a.max(b).max(c)
    }));
    out.check(C::asserted(S, "layer_cake_chain_order", chain, Sense::AtMost, tol));
    let cww: Vec<f64> = rows.iter().map(|r| r.1.fitted_constant).collect();
    out.check(C::info(S, "cww_constant_max", max_of(cww.iter().copied())));
    out.check(C::info(S, "cww_constant_spread", max_of(cww.iter().copied()) / min_of(cww.iter().copied())));

    let mut table = Table::new("layer_cake", &["instance", "direct", "maximal_bound", "ratio"]).plotted(0, 3, false);
    for (i, (r, _)) in rows.iter().enumerate() {
        table.push(vec![i as f64, r.direct, r.maximal_bound, r.ratio]);
    }
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn random_positive(n: u32, rng: &mut SplitMix64) -> Signal {
    Signal::new((0..1usize << n).map(|_| 0.1 + uniform(rng)).collect()).expect("power-of-two length")
}

/// A Carleson sequence with its subordinated function.
pub fn carleson_sequence(
    source: SequenceSource,
    n: u32,
    res: &Resolved,
    rng: &mut SplitMix64,
) -> Result<CarlesonSeq> {
    let nodes = (2usize << n) - 1;
    match source {
        SequenceSource::WalshCoeffs => {
            let f = gaussian_signal(n, rng);
            let omega = walsh_omega(res, n, rng);
            let entries = walsh::walsh_carleson_entries(&TileTable::new(&f), &omega.pieces());
            CarlesonSeq::new(entries, f.map(|v| v * v))
        }
        SequenceSource::FourierCoeffs => {
            let f = gaussian_signal(n, rng);
            let omega = band_omega(res, n, rng);
            let packets = PacketFamily::new(n, PACKETS, below(rng, u64::MAX), DEFAULT_ORDER)?;
            let entries = fourier::intrinsic_carleson_entries(&f, &omega, &packets)?;
            CarlesonSeq::new(entries, f.map(|v| v * v))
        }
        SequenceSource::Random => {
            // Heavy-tailed entries on a random subset of intervals.
            let entries = (0..nodes)
                .map(|_| {
                    let u = uniform(rng);
                    if u < 0.7 {
                        0.0
                    } else {
                        (1.0 / (1.0 - u)).powi(2)
                    }
                })
                .collect();
            CarlesonSeq::new(entries, random_positive(n, rng))
        }
        SequenceSource::Chain => {
            // Unit mass on every ancestor of a few random cells.
            let mut entries = vec![0.0; nodes];
            for _ in 0..=below(rng, 3) {
                let mut node = nodes / 2 + below(rng, 1 << n) as usize;
                loop {
                    entries[node] = 1.0;
                    if node == 0 {
                        break;
                    }
                    node = (node - 1) / 2;
                }
            }
            CarlesonSeq::new(entries, random_positive(n, rng))
        }
        SequenceSource::Mixed => unreachable!("resolved by the caller"),
    }
}

const MIXED: [SequenceSource; 3] = [SequenceSource::WalshCoeffs, SequenceSource::Random, SequenceSource::Chain];

fn stopping(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "stopping";
    let n = sc.n;
    let base = stream(sc, Suite::Stopping);
    let params = StoppingParams::default();
    let count = sc.samples_or(20);
    let built: Vec<(SequenceSource, SparseConstruction)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.fork(i as u64);
            let source = match sc.source {
                SequenceSource::Mixed => MIXED[i % MIXED.len()],
                s => s,
            };
            let a = carleson_sequence(source, n, res, &mut rng)?;
            Ok((source, build_sparse_from_carleson(&a, &params)?))
        })
        .collect::<Result<_>>()?;

    let tol = &sc.tolerances;
    let mut out = SuiteOutput::default();
    out.check(C::asserted(S, "stopping_eta", min_of(built.iter().map(|b| b.1.family.eta)), Sense::AtLeast, tol.eta));
    out.check(C::flag(S, "stopping_packing", built.iter().all(|b| b.1.packing_ok())));
    out.check(C::flag(S, "stopping_sparse", built.iter().all(|b| verify_sparse(&b.1.family).ok)));
    out.check(C::asserted(S, "stopping_certificate_slack", min_of(built.iter().map(|b| b.1.min_slack)), Sense::AtLeast, -tol.stopping));
    out.check(C::info(S, "stopping_max_ratio", max_of(built.iter().map(|b| b.1.max_ratio))));
    out.check(C::info(S, "stopping_untailed_ratio", max_of(built.iter().map(|b| b.1.untailed_ratio))));
    out.check(C::info(S, "stopping_max_generations", max_of(built.iter().map(|b| b.1.generations as f64))));

    let mut table = Table::new(
        "stopping",
        &["instance", "eta", "max_ratio", "min_slack", "generations", "members"],
    );
    for (i, (_, b)) in built.iter().enumerate() {
        table.push(vec![
            i as f64,
            b.family.eta,
            b.max_ratio,
            b.min_slack,
            b.generations as f64,
            b.family.members.len() as f64,
        ]);
    }
    out.tables.push(table);
    if count == 1 {
        let (source, b) = &built[0];
        out.artifacts.insert(
            "certificate".into(),
            json!({
                "source": source,
                "eta": b.family.eta,
                "c_star": b.max_ratio,
                "min_slack": b.min_slack,
                "packing_ok": b.packing_ok(),
                "generations": b.generations,
                "normalization": b.normalization,
                "family": b.stopping.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
            }),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

/// Principal intervals of a multiplicative cascade, with coefficients
/// uniform in `[1/2, 1]`.
fn sparse_instance(n: u32, rng: &mut SplitMix64) -> Result<(Signal, SparseFamily, Vec<f64>)> {
    let f = cascade_signal(n, CASCADE_SIGMA, rng);
    let family = principal_family(&f, 4.0)?;
    let values = family.members.iter().map(|_| 0.5 + 0.5 * uniform(rng)).collect();
    Ok((f, family, values))
}

fn good_lambda(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "goodlambda";
    let n = sc.n;
    let base = stream(sc, Suite::GoodLambda);
    let kinds: Vec<WeightKind> = match res.weight {
        Some(w) => vec![w],
        None => POWER_ALPHAS.iter().map(|&a| WeightKind::Power(a)).collect(),
    };
    let weights: Vec<WeightGrid> = kinds
        .iter()
        .map(|&k| weight_family(k, n, &mut base.fork(u64::MAX)))
        .collect::<Result<_>>()?;
    let cases: Vec<(usize, Vec<(sqfn_core::sparse::GoodLambdaTable, f64)>)> = (0..sc.samples_or(10))
        .into_par_iter()
        .map(|i| {
            let mut rng = base.fork(i as u64);
            let (f, family, values) = sparse_instance(n, &mut rng)?;
            let per_weight = weights
                .iter()
                .map(|w| {
                    let table = good_lambda_check(&values, &family, w, &GAMMAS)?;
                    let weak = weak_type_ratio(&f, &family, w)?.ratio;
                    Ok((table, weak))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((i, per_weight))
        })
        .collect::<Result<_>>()?;

    let fits: Vec<_> = cases.iter().flat_map(|(_, v)| v.iter().map(|(t, _)| t.sup_fit)).collect();
    let undefined = fits.iter().any(Option::is_none);
    let slope = max_of(fits.iter().flatten().map(|f| f.slope));
    let r2 = min_of(fits.iter().flatten().map(|f| f.r_squared));

    let mut out = SuiteOutput::default();
    let (slope, r2) = if undefined { (f64::NAN, f64::NAN) } else { (slope, r2) };
    out.check(C::asserted(S, "goodlambda_slope", slope, Sense::Below, 0.0));
    out.check(C::asserted(S, "goodlambda_r_squared", r2, Sense::AtLeast, sc.tolerances.r_squared));
    let max_ratio = max_of(cases.iter().flat_map(|(_, v)| v.iter().flat_map(|(t, _)| t.rows.iter().map(|r| r.ratio))));
    out.check(C::asserted(S, "goodlambda_ratio_bounded", max_ratio, Sense::AtMost, 1.0));
    let monotone = cases
        .iter()
        .flat_map(|(_, v)| v.iter())
        .all(|(t, _)| t.sup_ratio.windows(2).all(|p| p[0] <= p[1]));
    out.check(C::info(S, "goodlambda_sup_ratio_nondecreasing_in_gamma", monotone as u8 as f64));
    let positive = fits.iter().flatten().filter(|f| f.slope >= 0.0).count();
    out.check(C::info(S, "goodlambda_nonnegative_slopes", positive as f64));
    out.check(C::info(S, "goodlambda_undefined_fits", fits.iter().filter(|f| f.is_none()).count() as f64));
    out.check(C::info(S, "goodlambda_fits", fits.len() as f64));

    let sup_inverse: Vec<_> = cases.iter().flat_map(|(_, v)| v.iter().filter_map(|(t, _)| t.sup_fit_inverse)).collect();
    out.check(C::info(S, "goodlambda_sup_inverse_slope_max", max_of(sup_inverse.iter().map(|f| f.slope))));
    out.check(C::info(S, "goodlambda_sup_inverse_r_squared_min", min_of(sup_inverse.iter().map(|f| f.r_squared))));
    let pooled: Vec<_> = cases.iter().flat_map(|(_, v)| v.iter().filter_map(|(t, _)| t.fit)).collect();
    out.check(C::info(S, "goodlambda_pooled_slope_max", max_of(pooled.iter().map(|f| f.slope))));
    out.check(C::info(S, "goodlambda_pooled_r_squared_max", max_of(pooled.iter().map(|f| f.r_squared))));
    let skipped: usize = cases.iter().flat_map(|(_, v)| v.iter().map(|(t, _)| t.skipped_empty)).sum();
    out.check(C::info(S, "goodlambda_skipped_empty", skipped as f64));
    let skipped: usize = cases.iter().flat_map(|(_, v)| v.iter().map(|(t, _)| t.skipped_zero)).sum();
    out.check(C::info(S, "goodlambda_skipped_zero", skipped as f64));
    let weak: Vec<f64> = cases.iter().flat_map(|(_, v)| v.iter().map(|(_, w)| *w)).collect();
    out.check(C::info(S, "weak_type_ratio_max", max_of(weak.iter().copied())));
    out.check(C::info(S, "weak_type_ratio_spread", max_of(weak.iter().copied()) / min_of(weak.iter().copied())));

    let mut table = Table::new("goodlambda", &["family", "weight", "lambda", "gamma", "ratio"]).plotted(3, 4, false);
    for (i, per_weight) in &cases {
        for (k, (t, _)) in per_weight.iter().enumerate() {
            for r in &t.rows {
                table.push(vec![*i as f64, k as f64, r.lambda, r.gamma, r.ratio]);
            }
        }
    }
    out.tables.push(table);
    let mut sup_table = Table::new("goodlambda_sup", &["family", "weight", "gamma", "x", "sup_ratio"]).plotted(3, 4, false);
    for (i, per_weight) in &cases {
        for (k, (t, _)) in per_weight.iter().enumerate() {
            for (g, r) in GAMMAS.iter().zip(&t.sup_ratio) {
                sup_table.push(vec![*i as f64, k as f64, *g, g * g / t.a_inf, *r]);
            }
        }
    }
    out.tables.push(sup_table);
    let mut fits_table = Table::new("goodlambda_fits", &["family", "weight", "a_inf", "slope", "r_squared", "inverse_slope", "inverse_r_squared"]);
    for (i, per_weight) in &cases {
        for (k, (t, _)) in per_weight.iter().enumerate() {
            let f = t.sup_fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r_squared));
            let g = t.sup_fit_inverse.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r_squared));
            fits_table.push(vec![*i as f64, k as f64, t.a_inf, f.0, f.1, g.0, g.1]);
        }
    }
    out.tables.push(fits_table);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn operator_norm(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "operator_norm";
    let n = sc.n;
    let base = stream(sc, Suite::OperatorNorm);
    let omega = walsh_omega(res, n, &mut base.fork(u64::MAX));
    let kinds: Vec<WeightKind> = match res.weight {
        Some(w) => vec![w],
        None => SWEEP_ALPHAS.iter().map(|&a| WeightKind::Power(a)).collect(),
    };
    let starts = sc.samples_or(50);
    let rows: Vec<(f64, f64)> = kinds
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut rng = base.fork(i as u64);
            let w = weight_family(k, n, &mut rng)?;
            let a1 = w.characteristic(1.0, true)?;
            let est = weighted_operator_norm(&w, &omega, starts, POWER_ITERATIONS, &mut rng)?;
            Ok((a1, est.norm))
        })
        .collect::<Result<_>>()?;

    let mut out = SuiteOutput::default();
    let (a1, norms): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    match fit_loglog(&a1, &norms) {
        Some(fit) => {
            out.check(C::asserted(S, "operator_norm_slope", fit.slope, Sense::AtMost, sc.tolerances.operator_slope));
            out.check(C::info(S, "operator_norm_r_squared", fit.r_squared));
        }
        None => out.check(C::info(S, "operator_norm", norms[0])),
    }
    let mut table = Table::new("operator_norm", &["a1_dyadic", "norm"]).plotted(0, 1, true);
    rows.iter().for_each(|&(a, b)| table.push(vec![a, b]));
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn radial_suite(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "radial";
    let n = sc.n;
    let alphas: Vec<f64> = match (sc.alpha, res.weight) {
        (Some(a), _) => vec![a],
        (None, Some(WeightKind::Power(a))) => vec![a],
        _ => POWER_ALPHAS.to_vec(),
    };
    let points = radial::sample_points(sc.points);
    let sweep = radial::alpha_sweep(n, &alphas, &points)?;
    let tol = &sc.tolerances;
    let mut out = SuiteOutput::default();
    for (a, r) in alphas.iter().zip(&sweep.reports) {
        out.check(C::asserted(S, &format!("radial_spread_alpha_{a}"), r.spread(), Sense::AtMost, tol.radial_spread));
        out.check(C::info(S, &format!("radial_max_ratio_alpha_{a}"), r.max_ratio));
        out.check(C::info(S, &format!("radial_a1_alpha_{a}"), r.a1));
    }
    if alphas.len() > 1 {
        let slope = sweep.ratio_fit.map_or(f64::NAN, |f| f.slope);
        out.check(C::asserted(S, "radial_slope", slope, Sense::AtMost, tol.radial_slope));
        let slope = sweep.unnormalized_fit.map_or(f64::NAN, |f| f.slope);
        out.check(C::asserted(S, "radial_slope_unnormalized", slope, Sense::AtMost, tol.radial_slope));
    }

    // Subordination by enumeration is quadratic in the cells.
    let small = n.min(7);
    let mut rng = stream(sc, Suite::Radial);
    let mut subordinate = true;
    let mut reduction = true;
    for &a in &alphas {
        let w = RadialWeight::power(small, a)?;
        let top = w.a1() * w.profile()[0];
        let levels: Vec<f64> = (1..=8).map(|k| top * (k as f64 / 9.0)).collect();
        let family: Vec<Vec<GridInterval>> = levels.iter().map(|&l| radial::superlevel_intervals(w.weight(), l)).collect();
        let star: Vec<Vec<GridInterval>> = levels
            .iter()
            .map(|&l| radial::r_lambda(&w, l).map(|r| r.into_iter().collect()))
            .collect::<Result<_>>()?;
        subordinate &= radial::subordination_check(&family, &star).ok;
        let f = gaussian_signal(small, &mut rng);
        let omega = FreqFamily::random(small, 4, &mut rng);
        let r = radial::reduction_check(&f, &w, &omega)?;
        reduction &= r.direct <= r.subordinate_bound * (1.0 + 1e-12) && r.subordinate_bound <= r.tail_bound * (1.0 + 1e-12);
    }
    out.check(C::flag(S, "radial_subordination", subordinate));
    out.check(C::flag(S, "radial_reduction_chain", reduction));

    let mut table = Table::new("radial", &["alpha", "x", "integral", "weight", "ratio"]);
    for (a, r) in alphas.iter().zip(&sweep.reports) {
        for row in r.rows.iter().filter(|row| !row.singular) {
            table.push(vec![*a, row.x, row.integral, row.weight, row.ratio]);
        }
    }
    out.tables.push(table);
    let mut fit = Table::new("radial_alpha", &["a1", "max_ratio", "max_unnormalized"]).plotted(0, 1, true);
    for r in &sweep.reports {
        fit.push(vec![r.a1, r.max_ratio, r.max_unnormalized]);
    }
    out.tables.push(fit);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn domination(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "domination";
    let n = sc.n;
    let base = stream(sc, Suite::Domination);
    let mut rng = base.fork(u64::MAX);
    let models = [
        DominationModel::Walsh {
            omega: walsh_omega(res, n, &mut rng),
        },
        DominationModel::FourierIndicator {
            omega: band_omega(res, n, &mut rng),
            packets: PACKETS,
            seed: sc.seed,
        },
    ];
    let count = sc.samples_or(20);
    let mut out = SuiteOutput::default();
    let mut table = Table::new("domination", &["model", "instance", "c_star", "c_wave_packet", "eta"]);
    for (m, model) in models.iter().enumerate() {
        let certs: Vec<(f64, f64, f64, f64)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let f = gaussian_signal(n, &mut base.fork(i as u64));
                let c = verify_pointwise_domination(&f, model)?;
                Ok((c.c_star, c.c_wave_packet, c.eta, c.carleson_norm))
            })
            .collect::<Result<_>>()?;
        let name = model.name();
        let cs: Vec<f64> = certs.iter().map(|c| c.0).collect();
        let spread = max_of(cs.iter().copied()) / min_of(cs.iter().copied());
        out.check(C::asserted(S, &format!("c_star_spread_{name}"), spread, Sense::AtMost, sc.tolerances.domination_spread));
        out.check(C::info(S, &format!("c_star_max_{name}"), max_of(cs.iter().copied())));
        out.check(C::asserted(S, &format!("eta_{name}"), min_of(certs.iter().map(|c| c.2)), Sense::AtLeast, sc.tolerances.eta));
        let wp = max_of(certs.iter().map(|c| c.1 / (2.0 * c.3.sqrt())));
        out.check(C::asserted(S, &format!("wave_packet_certificate_{name}"), wp, Sense::AtMost, 1.0 + 1e-9));
        for (i, c) in certs.iter().enumerate() {
            table.push(vec![m as f64, i as f64, c.0, c.1, c.2]);
        }
    }
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn structural(sc: &Scenario, _res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "structural";
    let n = sc.n;
    let mut rng = stream(sc, Suite::Structural);
    let mut out = SuiteOutput::default();

    let mut defects = 0usize;
    for (scale, pos) in [(4, 0), (4, 7), (6, 33), (10, 513)] {
        let q = DyadicInterval::standard(scale, pos);
        let r = decompose_universe(&q, 6, 10.max(scale))?;
        defects += r.unclassified.len() + r.duplicates.len();
    }
    out.check(C::asserted(S, "decomposition_defects", defects as f64, Sense::AtMost, 0.0));

    let params = WhitneyParams::default();
    let (mut bad_members, mut bad_scales, mut overlaps) = (0usize, 0usize, 0usize);
    for _ in 0..sc.samples_or(100) {
        let res = 20u32;
        let a = below(&mut rng, 1 << res) as i64;
        let b = below(&mut rng, 1 << res) as i64;
        let (a, b) = (a.min(b), a.max(b) + 1);
        let omega = GridInterval::cells(a, b, res)?;
        let cover = whitney_cover(&omega, &params)?;
        bad_members += cover.members().filter(|m| !whitney_member_ok(m, &omega, &params)).count();
        for sub in &cover.subcollections {
            let mut scales: Vec<i32> = sub.iter().map(|m| m.scale).collect();
            scales.sort_unstable();
            bad_scales += scales.windows(2).filter(|w| w[0] == w[1]).count();
        }
        let mut all: Vec<GridInterval> = cover.members().map(|m| m.interval()).collect();
        all.sort();
        overlaps += all.windows(2).filter(|w| w[0].hi > w[1].lo).count();
    }
    out.check(C::asserted(S, "whitney_containment_violations", bad_members as f64, Sense::AtMost, 0.0));
    out.check(C::asserted(S, "whitney_scale_repeats", bad_scales as f64, Sense::AtMost, 0.0));
    out.check(C::asserted(S, "whitney_overlaps", overlaps as f64, Sense::AtMost, 0.0));

    let mut sparse_ok = true;
    for scale in 0..=n as i32 {
        let q = DyadicInterval::standard(scale, below(&mut rng, 1 << scale) as i64);
        let family = dilate_family(&q, n)?;
        sparse_ok &= verify_sparse(&family).ok;
    }
    out.check(C::flag(S, "dilate_family_sparse", sparse_ok));
    Ok(out)
}

// ---------------------------------------------------------------------------

fn weights(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "weights";
    let n = sc.n;
    let mut rng = stream(sc, Suite::Weights);
    let mut out = SuiteOutput::default();
    let mut table = Table::new("weights", &["kind", "a1", "a2", "a_inf", "a1_dyadic", "a2_dyadic", "a_inf_dyadic"]);
    for (k, kind) in weight_cycle(res).into_iter().enumerate() {
        let w = weight_family(kind, n, &mut rng)?;
        let r = w.report();
        let tag = kind.to_string();
        out.check(C::info(S, &format!("a1[{tag}]"), r.a1));
        out.check(C::info(S, &format!("a2[{tag}]"), r.a2));
        out.check(C::info(S, &format!("a_inf[{tag}]"), r.a_inf));
        out.check(C::info(S, &format!("a1_dyadic[{tag}]"), r.a1_dyadic));
        out.check(C::info(S, &format!("a_inf_over_a2[{tag}]"), r.a_inf / r.a2));
        out.check(C::asserted(S, &format!("a2_le_a1[{tag}]"), r.a2 / r.a1, Sense::AtMost, 1.0 + 1e-12));
        out.check(C::asserted(S, &format!("a2_le_a1_dyadic[{tag}]"), r.a2_dyadic / r.a1_dyadic, Sense::AtMost, 1.0 + 1e-12));
        if n <= sqfn_core::weights::WILSON_FULL_MAX_N {
            out.check(C::asserted(S, &format!("dyadic_le_full[{tag}]"), r.a1_dyadic / r.a1, Sense::AtMost, 1.0 + 1e-12));
        }
        table.push(vec![k as f64, r.a1, r.a2, r.a_inf, r.a1_dyadic, r.a2_dyadic, r.a_inf_dyadic]);
    }
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------------------

fn fourier_suite(sc: &Scenario, res: &Resolved) -> Result<SuiteOutput> {
    const S: &str = "fourier";
    let n = sc.n;
    let base = stream(sc, Suite::Fourier);
    let omega = band_omega(res, n, &mut base.fork(u64::MAX));
    let multipliers: Vec<Multiplier> = omega
        .bands()
        .iter()
        .map(|&b| Multiplier::of_kind(sc.multiplier, b, DEFAULT_ORDER))
        .collect();
    let mut out = SuiteOutput::default();
    let class_ok = multipliers.iter().all(|m| m.validate(DEFAULT_ORDER).is_ok());
    out.check(C::flag(S, "multiplier_class", class_ok));

    let packets = PacketFamily::new(n, PACKETS, sc.seed, DEFAULT_ORDER)?;
    let count = sc.samples_or(8);
    let rows: Vec<[f64; 5]> = (0..count)
        .into_par_iter()
        .map(|i| {
            let f = gaussian_signal(n, &mut base.fork(i as u64));
            let energy = f.norm_sq();
            let parseval = (dft(&ComplexSignal::from_real(&f)).energy() - energy).abs() / energy;
            let parts: Vec<ComplexSignal> = omega
                .bands()
                .iter()
                .map(|b| dft_projection(&f, b))
                .collect::<Result<_>>()?;
            let mut idem = 0.0f64;
            for (p, b) in parts.iter().zip(omega.bands()) {
                let again = fourier::dft_projection_complex(p, b)?;
                let d = max_of(again.values().iter().zip(p.values()).map(|(x, y)| (x - y).norm()));
                idem = idem.max(d / energy.sqrt());
            }
            let mut orth = 0.0f64;
            for a in 0..parts.len() {
                for b in a + 1..parts.len() {
                    orth = orth.max(parts[a].inner(&parts[b]).norm() / energy);
                }
            }
            let sq = if class_ok {
                fourier::multiplier_square_function(&f, &multipliers, DEFAULT_ORDER)?
            } else {
                fourier::rdf_square_function(&f, &omega)?
            };
            let bessel = sq.norm_sq() / energy;
            let entries = fourier::intrinsic_carleson_entries(&f, &omega, &packets)?;
            let a = CarlesonSeq::new(entries, f.map(|v| v * v))?;
            let c = carleson_norm(&a, Localization::Tailed).norm;
            Ok([parseval, idem, orth, bessel, c])
        })
        .collect::<Result<_>>()?;

    let tol = sc.tolerances.identity;
    let col = |k: usize| rows.iter().map(move |r| r[k]);
    out.check(C::asserted(S, "dft_parseval", max_of(col(0)), Sense::AtMost, tol));
    out.check(C::asserted(S, "projection_idempotence", max_of(col(1)), Sense::AtMost, tol));
    out.check(C::asserted(S, "projection_orthogonality", max_of(col(2)), Sense::AtMost, tol));
    out.check(C::asserted(S, "square_function_l2", max_of(col(3)), Sense::AtMost, 1.0 + tol));
    out.check(C::info(S, "intrinsic_carleson_max", max_of(col(4))));
    out.check(C::info(S, "intrinsic_carleson_spread", max_of(col(4)) / min_of(col(4))));
    Ok(out)
}
