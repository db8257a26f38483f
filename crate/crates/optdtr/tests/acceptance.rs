//! End-to-end acceptance suite.  Each numbered criterion prints one
//! PASS/FAIL line (visible with `--nocapture`); soft criteria log their
//! aspirational targets without failing the build.

use std::cell::Cell as StdCell;
use std::time::{Duration, Instant};

use optdtr::assumptions::{build_mask, AssumptionConfig, Cell, CellPolicy, Setting};
use optdtr::inference::{cs_noiseless, cs_procedure, CsConfig, Mode};
use optdtr::lpcore::{
    all_gap_bounds, welfare_bounds, BuiltinSimplex, LpSolver, SolveResult, Tolerances,
};
use optdtr::matrices::{ProblemMatrices, SparseRowMatrix};
use optdtr::ordering::{
    build_partial_order, identified_set, identified_set_via_paths, is_valid_sort,
    topological_sorts, GapMatrix, PartialOrder,
};
use optdtr::regimes::{
    backward_induction_oracle, optimal_regime_oracle, stochastic_welfare, Horizon, RegimeIndex,
    StochasticRegime, WelfareSpec,
};
use optdtr::simulate::{exact_p, true_q, DgpConfig};
use optdtr::statespace::StateSpaceLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Delegating solver that counts calls, tracks the worst primal-dual
/// discrepancy, and times the slowest solve.
struct Audit {
    inner: BuiltinSimplex,
    count: StdCell<usize>,
    max_dual_gap: StdCell<f64>,
    max_elapsed: StdCell<Duration>,
}

impl Audit {
    fn new() -> Self {
        Audit {
            inner: BuiltinSimplex,
            count: StdCell::new(0),
            max_dual_gap: StdCell::new(0.0),
            max_elapsed: StdCell::new(Duration::ZERO),
        }
    }
}

impl LpSolver for Audit {
    fn solve(
        &self,
        b: &SparseRowMatrix,
        p: &[f64],
        c: &[f64],
        maximize: bool,
        tol: &Tolerances,
    ) -> optdtr::Result<SolveResult> {
        let start = Instant::now();
        let r = self.inner.solve(b, p, c, maximize, tol)?;
        let elapsed = start.elapsed();
        self.count.set(self.count.get() + 1);
        if elapsed > self.max_elapsed.get() {
            self.max_elapsed.set(elapsed);
        }
        let dual_value: f64 =
            r.dual[..p.len()].iter().zip(p).map(|(&l, &pi)| l * pi).sum::<f64>() + r.dual[p.len()];
        let gap = (r.value - dual_value).abs();
        if gap > self.max_dual_gap.get() {
            self.max_dual_gap.set(gap);
        }
        Ok(r)
    }
}

fn dirichlet(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|_| -(rng.gen::<f64>()).ln()).collect();
    let sum: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= sum);
    q
}

fn initial_vertices(sorts: &[Vec<usize>]) -> Vec<usize> {
    let mut firsts: Vec<usize> = sorts.iter().map(|s| s[0]).collect();
    firsts.sort_unstable();
    firsts.dedup();
    firsts
}

struct Criterion {
    label: &'static str,
    soft: bool,
    errors: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(label: &'static str, soft: bool) -> Self {
        Criterion { label, soft, errors: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }

    fn note(&mut self, msg: String) {
        self.notes.push(msg);
    }
}

// Frozen dual-vertex tables for the single-period instrumental-variable
// bound on E[Y(1)] - E[Y(0)]; same derivation as the copy in the solver's
// unit tests (exact offline vertex enumeration, cross-checked against an
// independent solver).
const IV_UPPER: [[f64; 7]; 8] = [
    [-1.0, -1.0, 0.0, 0.0, -1.0, -2.0, 2.0],
    [0.0, -2.0, -1.0, 1.0, 1.0, 0.0, 1.0],
    [0.0, -1.0, -2.0, -1.0, -1.0, 0.0, 2.0],
    [0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0],
    [0.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, -1.0, -1.0, 1.0],
    [1.0, 1.0, 0.0, 0.0, -2.0, -1.0, 1.0],
];
const IV_LOWER: [[f64; 7]; 8] = [
    [-1.0, -1.0, 0.0, 1.0, 2.0, 2.0, 0.0],
    [-1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0],
    [-1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, -1.0, 1.0, 1.0, 0.0],
    [1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 2.0, -1.0, -1.0, 0.0, 0.0],
];

fn iv_oracle(p: &[f64]) -> (f64, f64) {
    let eval = |v: &[f64; 7]| -> f64 {
        v[..6].iter().zip(p).map(|(&c, &pi)| c * pi).sum::<f64>() + v[6]
    };
    let upper = IV_UPPER.iter().map(eval).fold(f64::INFINITY, f64::min);
    let lower = IV_LOWER.iter().map(|v| -eval(v)).fold(f64::NEG_INFINITY, f64::max);
    (lower, upper)
}

fn welfares(pm: &ProblemMatrices, q: &[f64]) -> Vec<f64> {
    pm.a.iter()
        .map(|row| row.iter().zip(q).map(|(&a, &qs)| a * qs).sum())
        .collect()
}

fn argmax(w: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in w.iter().enumerate() {
        if v > w[best] {
            best = i;
        }
    }
    best + 1
}

fn ordering_from(
    pm: &ProblemMatrices,
    p: &[f64],
    solver: &dyn LpSolver,
    tol: &Tolerances,
) -> (GapMatrix, PartialOrder) {
    let (lower, upper) = all_gap_bounds(pm, p, solver, tol).unwrap();
    let gaps = GapMatrix::new(lower, upper).unwrap();
    let po = build_partial_order(&gaps, tol.sign).unwrap();
    (gaps, po)
}

#[test]
fn acceptance() {
    let tol = Tolerances::default();
    let audit = Audit::new();
    let layout2 = StateSpaceLayout::build(&Horizon::full(2).unwrap(), true).unwrap();
    let welfare2 = WelfareSpec::terminal(2);
    let pm2 = ProblemMatrices::build(&layout2, &welfare2).unwrap();
    let mut results: Vec<Criterion> = Vec::new();

    // 1. Dimension facts -------------------------------------------------
    let mut c1 = Criterion::new("dimension facts", false);
    c1.check(layout2.d_q() == 65_536, || format!("d_q = {}", layout2.d_q()));
    c1.check(pm2.d_p() == 60, || format!("d_p = {}", pm2.d_p()));
    let kk = layout2.horizon().regime_count().unwrap();
    c1.check(kk == 8, || format!("|K| = {kk}"));
    // LP call count verified below against the audited full ordering.

    // 2. Four-regime toy orderings ---------------------------------------
    let mut c2 = Criterion::new("four-regime toy orderings", false);
    {
        let mk = |edges: &[(usize, usize)]| {
            let mut lower = vec![vec![-0.5; 4]; 4];
            let upper = vec![vec![0.5; 4]; 4];
            for &(a, b) in edges {
                lower[a - 1][b - 1] = 0.1;
            }
            for i in 0..4 {
                lower[i][i] = 0.0;
            }
            let gaps = GapMatrix::new(lower, upper).unwrap();
            build_partial_order(&gaps, 1e-7).unwrap()
        };
        let pa = mk(&[(1, 2), (4, 2), (2, 3)]);
        c2.check(identified_set(&pa) == vec![1, 4], || {
            format!("panel (a) set {:?}", identified_set(&pa))
        });
        let sorts_a = topological_sorts(&pa, 1000);
        c2.check(initial_vertices(&sorts_a.sorts) == vec![1, 4], || {
            "panel (a) initial vertices".into()
        });
        c2.check(is_valid_sort(&pa, &[1, 4, 2, 3]), || "(1,4,2,3) should validate".into());
        c2.check(!is_valid_sort(&pa, &[1, 2, 4, 3]), || "(1,2,4,3) should reject".into());
        let pb = mk(&[(1, 2), (1, 3), (2, 4), (3, 4)]);
        c2.check(identified_set(&pb) == vec![1], || {
            format!("panel (b) set {:?}", identified_set(&pb))
        });
        let sorts_b = topological_sorts(&pb, 1000);
        c2.check(initial_vertices(&sorts_b.sorts) == vec![1], || {
            "panel (b) initial vertices".into()
        });
    }

    // 5. Single-period bound oracle --------------------------------------
    let mut c5 = Criterion::new("single-period bound oracle", false);
    let layout1 = StateSpaceLayout::build(&Horizon::full(1).unwrap(), true).unwrap();
    let pm1 = ProblemMatrices::build(&layout1, &WelfareSpec::terminal(1)).unwrap();
    {
        let mut rng = ChaCha8Rng::seed_from_u64(501);
        for trial in 0..100 {
            let q = dirichlet(16, &mut rng);
            let p = pm1.b.apply(&q);
            let delta = pm1.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
            let hi = audit.solve(&pm1.b, &p, &delta, true, &tol).unwrap().value;
            let lo = audit.solve(&pm1.b, &p, &delta, false, &tol).unwrap().value;
            let (olo, ohi) = iv_oracle(&p);
            c5.check((lo - olo).abs() <= 1e-8, || format!("trial {trial} lower {lo} vs {olo}"));
            c5.check((hi - ohi).abs() <= 1e-8, || format!("trial {trial} upper {hi} vs {ohi}"));
        }
    }

    // 3/4/6. Ground-truth suite at the two-period Markov scale -----------
    let mut c3 = Criterion::new("ground-truth validity suite", false);
    let mut c4 = Criterion::new("triple characterization", false);
    let mut c6 = Criterion::new("duality and antisymmetry", false);
    let mut first_ordering_elapsed = Duration::ZERO;
    {
        let mut rng = ChaCha8Rng::seed_from_u64(301);
        for trial in 0..100 {
            let q = dirichlet(layout2.d_q(), &mut rng);
            let p = pm2.b.apply(&q);
            let start = Instant::now();
            let (lower, upper) = all_gap_bounds(&pm2, &p, &audit, &tol).unwrap();
            if trial == 0 {
                first_ordering_elapsed = start.elapsed();
            }
            let w = welfares(&pm2, &q);
            let gaps = GapMatrix::new(lower.clone(), upper.clone()).unwrap();
            let po = build_partial_order(&gaps, tol.sign).unwrap();
            let set = identified_set(&po);
            // (a) the true argmax is never excluded.
            let best = argmax(&w);
            c3.check(set.contains(&best), || {
                format!("trial {trial}: argmax {best} outside {set:?}")
            });
            for k in 1..=8usize {
                for kp in 1..=8usize {
                    if k == kp {
                        continue;
                    }
                    let truth = w[k - 1] - w[kp - 1];
                    // (b) edges agree in sign with the true gap.
                    if po.has_edge(RegimeIndex(k), RegimeIndex(kp)) {
                        c3.check(truth > 0.0, || {
                            format!("trial {trial}: edge {k}->{kp} but gap {truth}")
                        });
                    }
                    // (c) the bounds bracket the true gap.
                    c3.check(
                        lower[k - 1][kp - 1] <= truth + 1e-7
                            && truth <= upper[k - 1][kp - 1] + 1e-7,
                        || format!("trial {trial}: gap {truth} outside bounds for {k},{kp}"),
                    );
                }
            }
            // (d) welfare bounds bracket the true welfare.
            for k in 1..=8usize {
                let (lo, hi) = welfare_bounds(&pm2, &p, RegimeIndex(k), &audit, &tol).unwrap();
                c3.check(lo <= w[k - 1] + 1e-7 && w[k - 1] <= hi + 1e-7, || {
                    format!("trial {trial}: welfare {} outside [{lo}, {hi}]", w[k - 1])
                });
            }
            // Triple characterization, exact set equality.
            let via_paths = identified_set_via_paths(&po).unwrap();
            let sorts = topological_sorts(&po, 50_000);
            c4.check(!sorts.truncated, || format!("trial {trial}: sort cap hit"));
            let firsts = initial_vertices(&sorts.sorts);
            c4.check(set == via_paths && set == firsts, || {
                format!("trial {trial}: {set:?} vs {via_paths:?} vs {firsts:?}")
            });
            // Antisymmetry via independent minimizations on early draws.
            if trial < 10 {
                for k in 1..=8usize {
                    for kp in 1..=8usize {
                        if k == kp {
                            continue;
                        }
                        let delta = pm2.delta(RegimeIndex(kp), RegimeIndex(k)).unwrap();
                        let l_direct = audit.solve(&pm2.b, &p, &delta, false, &tol).unwrap().value;
                        c6.check(
                            (upper[k - 1][kp - 1] + l_direct).abs() <= 2e-6,
                            || {
                                format!(
                                    "trial {trial}: U({k},{kp}) {} + L({kp},{k}) {l_direct}",
                                    upper[k - 1][kp - 1]
                                )
                            },
                        );
                    }
                }
            }
        }
    }

    // 8. Stochastic-rule dominance and backward induction ----------------
    let mut c8 = Criterion::new("stochastic-rule dominance", false);
    {
        let mut rng = ChaCha8Rng::seed_from_u64(801);
        let grid: Vec<f64> = (0..=4).map(|i| i as f64 * 0.25).collect();
        for trial in 0..50 {
            let q = dirichlet(layout2.d_q(), &mut rng);
            let w = welfares(&pm2, &q);
            let det_max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut grid_max = f64::NEG_INFINITY;
            for &a in &grid {
                for &b in &grid {
                    for &c in &grid {
                        let reg = StochasticRegime::new(vec![vec![a], vec![c, b]]).unwrap();
                        let v = stochastic_welfare(&reg, &q, &layout2).unwrap();
                        grid_max = grid_max.max(v);
                    }
                }
            }
            c8.check(grid_max <= det_max + 1e-9, || {
                format!("trial {trial}: grid {grid_max} exceeds deterministic {det_max}")
            });
            match (
                optimal_regime_oracle(&q, &welfare2, &layout2),
                backward_induction_oracle(&q, &layout2),
            ) {
                (Ok(enumerated), Ok(bi)) => {
                    c8.check(enumerated == bi, || {
                        format!("trial {trial}: induction {bi:?} vs enumeration {enumerated:?}")
                    });
                }
                // Ties are excluded by the criterion.
                _ => {}
            }
        }
    }

    // 7/9/10. Preset processes, shrinkage, and runtime -------------------
    let mut c7 = Criterion::new("assumption shrinkage", false);
    let mut c9 = Criterion::new("runtime", false);
    let mut c10 = Criterion::new("preset replication (soft)", true);
    let m1_up = AssumptionConfig {
        m1: CellPolicy::all(Setting::Up),
        m2: CellPolicy::off(),
        learning: optdtr::assumptions::Learning::Off,
        markov: true,
    };
    let m1_m2_up = AssumptionConfig {
        m2: CellPolicy::all(Setting::Up),
        ..m1_up.clone()
    };
    let q_pos = true_q(&DgpConfig::positive(), &layout2, 1_000_000, 71).unwrap();
    let p_pos = exact_p(&q_pos, &pm2.b);
    let pm_pos_m1 = pm2.apply_mask(&build_mask(&layout2, &m1_up).unwrap().h).unwrap();
    let pm_pos_m2 = pm2.apply_mask(&build_mask(&layout2, &m1_m2_up).unwrap().h).unwrap();
    let (_, po_m1) = ordering_from(&pm_pos_m1, &p_pos, &audit, &tol);
    let ordering_count_before = audit.count.get();
    let ordering_start = Instant::now();
    let (_gaps_m2, po_m2) = ordering_from(&pm_pos_m2, &p_pos, &audit, &tol);
    let full_ordering_elapsed = ordering_start.elapsed();
    let ordering_count = audit.count.get() - ordering_count_before;
    {
        let edges_m1 = po_m1.edges();
        let edges_m2 = po_m2.edges();
        c7.check(edges_m1.iter().all(|e| edges_m2.contains(e)), || {
            format!("edges under M1 {edges_m1:?} not within M2 {edges_m2:?}")
        });
        let set_m1 = identified_set(&po_m1);
        let set_m2 = identified_set(&po_m2);
        c7.check(set_m2.iter().all(|k| set_m1.contains(k)), || {
            format!("set under M2 {set_m2:?} not within M1 {set_m1:?}")
        });
        c7.note(format!("M1 set {set_m1:?}, M1+M2 set {set_m2:?}"));
    }
    c1.check(ordering_count == 56, || format!("ordering used {ordering_count} LP solves"));
    c9.check(audit.max_elapsed.get() <= Duration::from_secs(5), || {
        format!("slowest LP {:?}", audit.max_elapsed.get())
    });
    c9.check(first_ordering_elapsed <= Duration::from_secs(300), || {
        format!("unmasked 56-LP ordering took {first_ordering_elapsed:?}")
    });
    c9.note(format!(
        "slowest LP {:?}, unmasked ordering {:?}, masked ordering {:?}",
        audit.max_elapsed.get(),
        first_ordering_elapsed,
        full_ordering_elapsed
    ));

    // Criterion 10 runs every preset under selection + outcome uniformity
    // with directions matched to the generating signs.
    {
        let w_pos = welfares(&pm2, &q_pos);
        let best_pos = argmax(&w_pos);
        let set_pos = identified_set(&po_m2);
        c10.check(!po_m2.edges().is_empty(), || "positive: empty edge set".into());
        c10.check(set_pos.contains(&best_pos), || {
            format!("positive: true optimum {best_pos} outside {set_pos:?}")
        });
        if set_pos != vec![7, 8] {
            c10.note(format!("aspirational: positive set {set_pos:?}, target {{7, 8}}"));
        }

        // Negative second-period effect: the outcome direction flips there.
        let m2_flipped = AssumptionConfig {
            m2: CellPolicy {
                default: Setting::Up,
                overrides: vec![
                    (Cell { t: 2, hist: vec![0] }, Setting::Down),
                    (Cell { t: 2, hist: vec![1] }, Setting::Down),
                ],
            },
            ..m1_up.clone()
        };
        let q_neg = true_q(&DgpConfig::neg_mu22(), &layout2, 1_000_000, 72).unwrap();
        let p_neg = exact_p(&q_neg, &pm2.b);
        let pm_neg = pm2.apply_mask(&build_mask(&layout2, &m2_flipped).unwrap().h).unwrap();
        let (_, po_neg) = ordering_from(&pm_neg, &p_neg, &audit, &tol);
        let w_neg = welfares(&pm2, &q_neg);
        let best_neg = argmax(&w_neg);
        let set_neg = identified_set(&po_neg);
        c10.check(!po_neg.edges().is_empty(), || "neg-mu22: empty edge set".into());
        c10.check(set_neg.contains(&best_neg), || {
            format!("neg-mu22: true optimum {best_neg} outside {set_neg:?}")
        });
        if set_neg != vec![2] {
            c10.note(format!("aspirational: neg-mu22 set {set_neg:?}, target {{2}}"));
        }

        // Dropping the second instrument can only enlarge the set.
        let h_nz = Horizon::new(2, vec![true, false], optdtr::regimes::Adaptivity::Full).unwrap();
        let layout_nz = StateSpaceLayout::build(&h_nz, true).unwrap();
        let pm_nz_full = ProblemMatrices::build(&layout_nz, &welfare2).unwrap();
        let q_nz = true_q(&DgpConfig::no_z2(), &layout_nz, 1_000_000, 73).unwrap();
        let p_nz = exact_p(&q_nz, &pm_nz_full.b);
        let pm_nz =
            pm_nz_full.apply_mask(&build_mask(&layout_nz, &m1_m2_up).unwrap().h).unwrap();
        let (_, po_nz) = ordering_from(&pm_nz, &p_nz, &audit, &tol);
        let w_nz = welfares(&pm_nz_full, &q_nz);
        let best_nz = argmax(&w_nz);
        let set_nz = identified_set(&po_nz);
        c10.check(set_nz.contains(&best_nz), || {
            format!("no-z2: true optimum {best_nz} outside {set_nz:?}")
        });
        c10.check(set_pos.iter().all(|k| set_nz.contains(k)), || {
            format!("no-z2 set {set_nz:?} does not cover positive set {set_pos:?}")
        });
        if set_nz != vec![6, 7, 8] {
            c10.note(format!("aspirational: no-z2 set {set_nz:?}, target {{6, 7, 8}}"));
        }
    }

    // 11. Inference ------------------------------------------------------
    let mut c11 = Criterion::new("inference (soft)", true);
    {
        // Noise-free exactness against the shrunken positive-preset set.
        let cs = cs_noiseless(&pm_pos_m2, &p_pos, &audit, &tol).unwrap();
        let set_pos = identified_set(&po_m2);
        c11.check(cs.survivors == set_pos, || {
            format!("noiseless survivors {:?} vs identified set {set_pos:?}", cs.survivors)
        });
        c11.check(cs.steps.len() <= 7, || "too many elimination steps".into());

        // Single-period coverage: a process with a strong instrument and a
        // large true gap.  State 0b1010 is the complier who benefits.
        let mut q0 = vec![0.3 / 15.0; 16];
        q0[0b1010] = 0.7;
        let p0 = pm1.b.apply(&q0);
        let d_star = cs_noiseless(&pm1, &p0, &audit, &tol).unwrap().survivors;
        let mut covered = 0usize;
        let mut max_steps = 0usize;
        let n = 2000usize;
        let cum: Vec<f64> = q0
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        for rep in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(11_000 + rep);
            let rows: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let s = cum.iter().position(|&c| u <= c).unwrap_or(15);
                    let z1 = u8::from(rng.gen::<f64>() < 0.5);
                    let (y, d) = layout1.observed_cell(s, &[z1]);
                    (y, d, vec![z1])
                })
                .collect();
            let cfg = CsConfig::new(0.05, 200, Mode::Vertex, 90_000 + rep).unwrap();
            let cs = cs_procedure(&rows, &layout1, &pm1, &cfg, &tol).unwrap();
            max_steps = max_steps.max(cs.steps.len());
            if d_star.iter().all(|k| cs.survivors.contains(k)) {
                covered += 1;
            }
        }
        let coverage = covered as f64 / 200.0;
        c11.check(coverage >= 0.90, || format!("coverage {coverage}"));
        c11.check(max_steps <= 1, || format!("max elimination steps {max_steps}"));
        c11.note(format!("coverage {coverage} over 200 replications, target set {d_star:?}"));
    }

    // Duality audit covers every solve issued above.
    c6.check(audit.max_dual_gap.get() <= 1e-6, || {
        format!("worst primal-dual gap {}", audit.max_dual_gap.get())
    });

    results.push(c1);
    results.push(c2);
    results.push(c3);
    results.push(c4);
    results.push(c5);
    results.push(c6);
    results.push(c7);
    results.push(c8);
    results.push(c9);
    results.push(c10);
    results.push(c11);
    results.sort_by_key(|c| c.label);

    let order = [
        "dimension facts",
        "four-regime toy orderings",
        "ground-truth validity suite",
        "triple characterization",
        "single-period bound oracle",
        "duality and antisymmetry",
        "assumption shrinkage",
        "stochastic-rule dominance",
        "runtime",
        "preset replication (soft)",
        "inference (soft)",
    ];
    let mut fatal = false;
    for (i, label) in order.iter().enumerate() {
        let c = results.iter().find(|c| c.label == *label).unwrap();
        let pass = c.errors.is_empty();
        let verdict = if pass {
            "PASS"
        } else if c.soft {
            "FAIL (soft, not fatal)"
        } else {
            fatal = true;
            "FAIL"
        };
        println!("criterion {:02} {:<32} {}", i + 1, c.label, verdict);
        for n in &c.notes {
            println!("    note: {n}");
        }
        for e in c.errors.iter().take(5) {
            println!("    error: {e}");
        }
    }
    assert!(!fatal, "one or more acceptance criteria failed");
}
