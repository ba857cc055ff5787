//! Acceptance suite. Each criterion prints one PASS/FAIL line with the
//! measured numbers. Criteria with a documented shortfall are listed in
//! `KNOWN_SHORTFALLS`; they still print FAIL, and any other failure makes the
//! run exit non-zero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use romscat_core::inversion::{condition_number, DataFitModel, RomGnModel};
use romscat_core::io;
use romscat_core::oracle::chebyshev_snapshots;
use romscat_core::pipeline;
use romscat_core::rom::{check_invariants, GramPair, RomCheckReport};
use romscat_core::*;

const KNOWN_SHORTFALLS: &[usize] = &[7, 10];

const C0: f64 = 1.8;
const LAMBDA: f64 = 8.9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(t: Instant, limit_s: u64) -> (bool, String) {
    let e = t.elapsed();
    (e <= Duration::from_secs(limit_s), format!("{:.1}s/{limit_s}s", e.as_secs_f64()))
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn model_1d(nz: usize, n: usize, rel_tol: f64) -> ForwardModel {
    let g = Grid2D::one_d(nz, 1.0).unwrap();
    let med = Medium::homogeneous(g, C0).unwrap();
    let arr = ArrayGeometry::centered(&g, 1, 1, 0).unwrap();
    let pulse = Pulse::ricker_for_wavelength(C0, LAMBDA);
    let tau = pulse.default_tau();
    ForwardModel::new(&med, arr, pulse, tau, n, None, 256, rel_tol).unwrap()
}

/// The two ROM runs shared by the structural criteria.
struct StructuralRuns {
    runs: Vec<(&'static str, Rom, DataCube, RomCheckReport)>,
    elapsed_1d: Duration,
    elapsed_all: Duration,
}

fn structural_runs() -> StructuralRuns {
    let t = Instant::now();
    let fm = model_1d(120, 10, 0.0);
    let q: Vec<f64> = (0..120).map(|i| if (10..16).contains(&i) { 0.2 } else { 0.0 }).collect();
    let d1 = fm.data(&q).unwrap();
    let rom1 = rom_build(&d1, 0.0).unwrap();
    let c1 = check_invariants(&rom1, &d1).unwrap();
    let elapsed_1d = t.elapsed();

    let g = Grid2D::new(60, 60, 1.0).unwrap();
    let med = Medium::homogeneous(g, C0).unwrap();
    let arr = ArrayGeometry::centered(&g, 4, 6, 0).unwrap();
    let pulse = Pulse::ricker_for_wavelength(C0, LAMBDA);
    let tau = pulse.default_tau();
    let fm2 = ForwardModel::new(&med, arr, pulse, tau, 12, None, 256, 0.0).unwrap();
    let q2: Vec<f64> = (0..g.len())
        .map(|i| {
            let (x, z) = g.coords(i);
            if (x - 30.0).abs() <= 4.0 && (z - 15.0).abs() <= 3.0 { 0.1 } else { 0.0 }
        })
        .collect();
    let d2 = fm2.data(&q2).unwrap();
    let rom2 = rom_build(&d2, 0.0).unwrap();
    let c2 = check_invariants(&rom2, &d2).unwrap();
    StructuralRuns {
        runs: vec![("1d", rom1, d1, c1), ("2d", rom2, d2, c2)],
        elapsed_1d,
        elapsed_all: t.elapsed(),
    }
}

fn data_fit(s: &StructuralRuns) -> Outcome {
    let (_, _, _, c) = &s.runs[0];
    let ok = c.data_fit <= 1e-8 && s.elapsed_1d <= Duration::from_secs(5);
    outcome(ok, format!("fit {:.2e} <= 1e-8, {:.2}s/5s", c.data_fit, s.elapsed_1d.as_secs_f64()))
}

fn structure(s: &StructuralRuns) -> Outcome {
    let mut ok = s.elapsed_all <= Duration::from_secs(60);
    let mut parts = Vec::new();
    for (name, rom, _, c) in &s.runs {
        // I − P after the floor is L·Lᵀ·τ²/2.
        let floored = (&rom.l * rom.l.transpose()).symmetric_eigenvalues().min() * rom.tau * rom.tau / 2.0;
        let run_ok = c.off_tridiagonal <= 1e-8
            && c.spectrum_min >= -1.0 - 1e-8
            && c.spectrum_max <= 1.0 + 1e-8
            && floored > 0.0;
        ok &= run_ok;
        parts.push(format!(
            "{name}: off-tri {:.1e}, spectrum [{:.6}, {:.6}], min eig(I-P) {:.1e}",
            c.off_tridiagonal, c.spectrum_min, c.spectrum_max, floored
        ));
    }
    parts.push(format!("{:.1}s/60s", s.elapsed_all.as_secs_f64()));
    outcome(ok, parts.join("; "))
}

fn dual_snapshots(s: &StructuralRuns) -> Outcome {
    let ok = s.runs.iter().all(|(_, _, _, c)| c.dual_lower <= 1e-8);
    let parts: Vec<String> = s.runs.iter().map(|(n, _, _, c)| format!("{n}: {:.1e}", c.dual_lower)).collect();
    outcome(ok, format!("sub-diagonal mass {} <= 1e-8", parts.join(", ")))
}

fn lanczos(s: &StructuralRuns) -> Outcome {
    let mut ok = s.runs.iter().all(|(_, _, _, c)| c.lanczos <= 1e-8);
    let mut parts: Vec<String> = s.runs.iter().map(|(n, _, _, c)| format!("{n}: {:.1e}", c.lanczos)).collect();
    // By hand: ⟨b,b⟩ = 1 gives Γ̂_0 = 1, Γ_0 = 1/L_00 = 1/2 and
    // Γ̂_1 = (−L_10 Γ_0)⁻¹ = (1/2)⁻¹ = 2.
    let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -1.0, 3.0]);
    let steps = rom::extract_lanczos_steps(&l, 1, &DMatrix::from_element(1, 1, 1.0)).unwrap();
    let hand = steps.gamma_hat[0][(0, 0)] == 1.0
        && steps.gamma[0][(0, 0)] == 0.5
        && steps.gamma_hat[1][(0, 0)] == 2.0
        && steps.gamma[1][(0, 0)] == 1.0 / 6.0
        && steps.reconstruct().unwrap() == l;
    ok &= hand;
    parts.push(format!("hand example {}", if hand { "exact" } else { "mismatch" }));
    outcome(ok, format!("reconstruction {} (<= 1e-8)", parts.join(", ")))
}

fn random_block_orthogonal(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(n * m, n * m);
    for j in 0..n {
        let g = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(rng));
        let q = g.qr().q();
        y.view_mut((j * m, j * m), (m, m)).copy_from(&q);
    }
    y
}

fn invariance(s: &StructuralRuns) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_data, mut worst_eig) = (0.0f64, 0.0f64);
    for (_, rom, _, _) in &s.runs {
        let base = rom_predict_data(rom, 2 * rom.n).unwrap();
        let mut eigs = rom.p.clone().symmetric_eigenvalues().as_slice().to_vec();
        eigs.sort_by(f64::total_cmp);
        for _ in 0..20 {
            let y = random_block_orthogonal(rom.n, rom.m, &mut rng);
            let t = orthogonal_transform(rom, &y).unwrap();
            worst_data = worst_data.max(base.relative_misfit(&rom_predict_data(&t, 2 * rom.n).unwrap()));
            let mut ts = t.p.clone().symmetric_eigenvalues().as_slice().to_vec();
            ts.sort_by(f64::total_cmp);
            let d = eigs.iter().zip(&ts).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_eig = worst_eig.max(d);
        }
    }
    outcome(
        worst_data <= 1e-12 && worst_eig <= 1e-12,
        format!("20 Y per run: data {worst_data:.1e}, spectrum {worst_eig:.1e} (<= 1e-12)"),
    )
}

fn gram_oracle() -> Outcome {
    let g = Grid2D::new(12, 12, 1.0).unwrap();
    let med = Medium::homogeneous(g, 1.0).unwrap();
    let arr = ArrayGeometry::centered(&g, 2, 4, 0).unwrap();
    let pulse = Pulse::ricker_for_wavelength(1.0, 6.0);
    let tau = pulse.default_tau();
    let n = 5;
    let q: Vec<f64> = (0..g.len())
        .map(|i| {
            let (x, z) = g.coords(i);
            if (x - 6.0).abs() <= 2.0 && (4.0..7.0).contains(&z) { 0.25 } else { 0.0 }
        })
        .collect();
    let medium = med.with_reflectivity(q.clone()).unwrap();
    let dense = DenseOperator::new(assemble_operators(&medium).a_dense()).unwrap();
    let vol = g.cell_volume();

    // Gram matrices against U = (u_0, …, u_{n−1}) from the dense leapfrog propagator.
    let fm = ForwardModel::new(&med, arr.clone(), pulse.clone(), tau, n, None, 256, 0.0).unwrap();
    let b = &fm.sensors.b;
    let p_lf = dense.leapfrog_propagator(tau, fm.substeps);
    let snaps = chebyshev_snapshots(&p_lf, b, n);
    let m = arr.m();
    let mut u = DMatrix::zeros(g.len(), n * m);
    for (j, s) in snaps.iter().enumerate() {
        u.columns_mut(j * m, m).copy_from(s);
    }
    let mass = u.tr_mul(&u) * vol;
    let stiff = u.tr_mul(&(&p_lf * &u)) * vol;
    let gp = GramPair::from_data(&fm.data(&q).unwrap()).unwrap();
    let em = (&gp.mass - &mass).norm() / mass.norm();
    let es = (&gp.stiffness - &stiff).norm() / stiff.norm();

    // Simulator snapshots against cos(jτ√A)b under substep doubling.
    let exact: Vec<DMatrix<f64>> = (0..2 * n).map(|j| dense.cos_apply(j as f64 * tau, b)).collect();
    let scale = exact.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let base = fm.substeps;
    let errs: Vec<f64> = [1, 2, 4, 8, 16, 32, 64]
        .iter()
        .map(|k| {
            let f = ForwardModel::new(&med, arr.clone(), pulse.clone(), tau, n, Some(base * k), 256, 0.0).unwrap();
            let s = f.snapshots(&q, 2 * n).unwrap();
            s.iter().zip(&exact).map(|(a, e)| (a - e).norm()).fold(0.0, f64::max) / scale
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let second_order = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let finest = *errs.last().unwrap();
    outcome(
        em <= 1e-10 && es <= 1e-10 && finest <= 1e-4 && second_order,
        format!(
            "{} dof: M {em:.1e}, S {es:.1e} (<= 1e-10); snapshot error {} at substeps {base}x(1..64), ratios {}",
            g.len(),
            errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join("/"),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join("/"),
        ),
    )
}

fn born_transform() -> Outcome {
    let t = Instant::now();
    let (nz, n) = (100, 30);
    let fm = model_1d(nz, n, 0.0);
    // Two-cell layers of alternating sign.
    let q: Vec<f64> = (0..nz)
        .map(|i| match i {
            15..60 if ((i - 15) / 2) % 2 == 0 => 0.05,
            15..60 => -0.05,
            _ => 0.0,
        })
        .collect();
    let d0 = fm.data(&fm.zero()).unwrap();
    let dq = fm.data(&q).unwrap();
    let oracle = oracle_born_data(|x: &[f64]| fm.data(x), &q, 1e-3).unwrap();
    let rom0 = rom_build(&d0, 0.0).unwrap();
    let romq = rom_build(&dq, 0.0).unwrap();
    let inputs = |l_q: DMatrix<f64>| BornInputs {
        data_ref: d0.clone(),
        l_q,
        l_0: rom0.l.clone(),
        b_rom0: rom0.b_rom.clone(),
        tau: fm.tau,
    };
    let born = born_data(&inputs(romq.l.clone())).unwrap();

    let smax = (0..2 * n).map(|j| (&oracle.d[j] - &d0.d[j]).norm()).fold(0.0, f64::max);
    let (mut worst, mut misordered, mut nontrivial) = (0.0f64, Vec::new(), 0);
    for j in 0..2 * n {
        let o = &oracle.d[j];
        if (o - &d0.d[j]).norm() < 0.05 * smax {
            continue;
        }
        nontrivial += 1;
        let eb = (&born.d[j] - o).norm() / o.norm();
        let er = (&dq.d[j] - o).norm() / o.norm();
        worst = worst.max(eb);
        if eb >= er {
            misordered.push(j);
        }
    }

    // D^Born − D_0 is linear in ΔL.
    let dl = &romq.l - &rom0.l;
    let scale = born.d.iter().zip(&d0.d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let mut linearity = 0.0f64;
    for alpha in [0.5, -2.0, 3.0] {
        let b = born_data(&inputs(&rom0.l + &dl * alpha)).unwrap();
        for j in 0..2 * n {
            let e = (&b.d[j] - &d0.d[j] - (&born.d[j] - &d0.d[j]) * alpha).norm() / (alpha.abs() * scale);
            linearity = linearity.max(e);
        }
    }
    let fixed = born_data(&inputs(rom0.l.clone())).unwrap() == d0;
    let (time_ok, time) = within(t, 30);
    let ok = worst <= 0.05 && misordered.is_empty() && linearity <= 1e-12 && fixed && time_ok;
    outcome(
        ok,
        format!(
            "{nontrivial} nontrivial steps: worst error {worst:.1e} <= 5e-2; raw data closer at j = {misordered:?}; \
             linearity {linearity:.1e} <= 1e-12; fixed point {}; {time}",
            if fixed { "exact" } else { "inexact" }
        ),
    )
}

fn psf() -> Outcome {
    let t = Instant::now();
    let (nx, nz) = (401, (21.5 * LAMBDA) as usize);
    let g = Grid2D::new(nx, nz, 1.0).unwrap();
    let med = Medium::homogeneous(g, C0).unwrap();
    let arr = ArrayGeometry::centered(&g, 4, 16, 0).unwrap();
    let pulse = Pulse::ricker_for_wavelength(C0, LAMBDA);
    let tau = pulse.default_tau();
    let fm = ForwardModel::new(&med, arr, pulse, tau, 105, None, 256, 0.0).unwrap();
    let rp = reference_projection(&fm).unwrap();
    let center = |k: f64| g.index(nx / 2, g.row_of(k * LAMBDA));
    let shallow = point_spread(&rp, &fm, center(5.0), LAMBDA, 0.1).unwrap();
    let deep = point_spread(&rp, &fm, center(20.0), LAMBDA, 0.1).unwrap();
    let (px, pz) = g.coords(shallow.peak());
    let (cx, cz) = g.coords(shallow.center);
    let dist = (px - cx).hypot(pz - cz);
    let (m5, m20) = (shallow.cross_range_moment(&g), deep.cross_range_moment(&g));
    let (time_ok, time) = within(t, 120);
    outcome(
        dist <= LAMBDA / 2.0 && m20 > m5 && time_ok,
        format!("peak {dist:.2} from center (<= {:.2}); lobe moment {m5:.1} at 5λ < {m20:.1} at 20λ; {time}", LAMBDA / 2.0),
    )
}

/// Two-layer 1D problem on a hat basis.
struct DeskProblem {
    fm: ForwardModel,
    basis: SearchBasis,
    q_true: Vec<f64>,
}

fn desk_problem(rel_tol: f64) -> DeskProblem {
    let fm = model_1d(80, 24, rel_tol);
    let step = C0 * fm.tau;
    let ranges: Vec<f64> = (0..).map(|k| 9.0 + k as f64 * step).take_while(|&z| z <= 39.0).collect();
    let basis = SearchBasis::line_1d(fm.grid, &ranges).unwrap();
    let nodes: Vec<f64> = ranges
        .iter()
        .map(|&z| match z {
            z if (13.0..22.0).contains(&z) => 0.3,
            z if (26.0..34.0).contains(&z) => -0.2,
            _ => 0.0,
        })
        .collect();
    let q_true = basis.evaluate(&nodes).unwrap();
    DeskProblem { fm, basis, q_true }
}

fn inversion() -> Outcome {
    let t = Instant::now();
    let desk = desk_problem(0.0);
    let data = desk.fm.data(&desk.q_true).unwrap();
    let (x, rep) = gauss_newton_rom(&data, &desk.fm, &desk.basis, &GnOptions::default()).unwrap();
    let err = rel_l2(&desk.basis.evaluate(&x).unwrap(), &desk.q_true);
    let ok_1d = err <= 0.15 && rep.iterations() <= 5;

    let nx = 64;
    let g = Grid2D::new(nx, nx, 1.0).unwrap();
    let med = Medium::homogeneous(g, C0).unwrap();
    let arr = ArrayGeometry::centered(&g, 8, 6, 0).unwrap();
    let pulse = Pulse::ricker_for_wavelength(C0, LAMBDA);
    let tau = pulse.default_tau();
    let n = 40;
    let fm = ForwardModel::new(&med, arr.clone(), pulse, tau, n, None, 256, 1e-10).unwrap();
    let xs = arr.cross_ranges(&g);
    let step = 2.0 * C0 * tau;
    let zmax = (nx as f64 - LAMBDA).min(0.9 * n as f64 * C0 * tau);
    let ranges: Vec<f64> = (0..).map(|k| LAMBDA + k as f64 * step).take_while(|&z| z <= zmax).collect();
    let crosses: Vec<f64> = (0..7).map(|k| xs[0] + (xs[7] - xs[0]) * k as f64 / 6.0).collect();
    let basis = SearchBasis::tensor(g, &ranges, &crosses).unwrap();
    let (bx, bz) = (g.x(nx / 2), 0.45 * nx as f64);
    let q: Vec<f64> = (0..g.len())
        .map(|i| {
            let (x, z) = g.coords(i);
            if (x - bx).abs() <= 4.0 && (z - bz).abs() <= 4.0 { 0.2 } else { 0.0 }
        })
        .collect();
    let (x2, _) = gauss_newton_rom(&fm.data(&q).unwrap(), &fm, &basis, &GnOptions::default()).unwrap();
    let rec = basis.evaluate(&x2).unwrap();
    let peak = rec.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
    let (px, pz) = g.coords(peak);
    let dist = (px - bx).hypot(pz - bz);
    let (time_ok, time) = within(t, 1200);
    outcome(
        ok_1d && dist <= LAMBDA / 2.0 && time_ok,
        format!(
            "1d error {err:.1e} <= 0.15 in {} iterations; 2d peak {dist:.2} from box center (<= {:.2}); {time}",
            rep.iterations(),
            LAMBDA / 2.0
        ),
    )
}

fn noise() -> Outcome {
    let desk = desk_problem(0.1);
    let clean = desk.fm.data(&desk.q_true).unwrap();
    let data = add_noise(&clean, 0.05, 7).unwrap();
    let opts = GnOptions { svd_rel_cutoff: 1e-2, ..GnOptions::default() };
    let run = gauss_newton_rom(&data, &desk.fm, &desk.basis, &opts);
    let Ok((x, rep)) = run else {
        return outcome(false, format!("pipeline failed: {}", run.err().unwrap()));
    };
    let rom = rom_build(&data, 0.1).unwrap();
    let eigs = rom.p.clone().symmetric_eigenvalues();
    let bounded = eigs.min() >= -1.0 - 1e-6 && eigs.max() <= 1.0 + 1e-6;
    let monotone = rep.objectives.windows(2).all(|w| w[1] <= w[0]);
    let err = rel_l2(&desk.basis.evaluate(&x).unwrap(), &desk.q_true);
    outcome(
        bounded && monotone && err <= 0.3,
        format!(
            "completed ({}), objective {}, P spectrum [{:.4}, {:.4}], error {err:.2} (<= 0.30)",
            rep.status,
            if monotone { "non-increasing" } else { "increased" },
            eigs.min(),
            eigs.max()
        ),
    )
}

fn conditioning() -> Outcome {
    let desk = desk_problem(0.0);
    let fm = &desk.fm;
    let data = fm.data(&desk.q_true).unwrap();
    let d0 = fm.data(&fm.zero()).unwrap();
    let rom0 = rom_build(&d0, 0.0).unwrap();
    let romq = rom_build(&data, 0.0).unwrap();
    let born = born_data(&BornInputs {
        data_ref: d0,
        l_q: romq.l.clone(),
        l_0: rom0.l.clone(),
        b_rom0: rom0.b_rom.clone(),
        tau: fm.tau,
    })
    .unwrap();
    let zeros = vec![0.0; desk.basis.len()];
    let cond = |model: &dyn ResidualModel| {
        let r0 = model.residual(&zeros).unwrap();
        let j = jacobian(model, &zeros, &r0, 1e-4).unwrap();
        condition_number(&jacobian_conditioning_report(&j))
    };
    let rom_gn = cond(&RomGnModel { model: fm, basis: &desk.basis, l_data: romq.l.clone(), m: 1 });
    let ls_born = cond(&DataFitModel { model: fm, basis: &desk.basis, data: born });
    outcome(rom_gn <= ls_born, format!("ROM-GN {rom_gn:.2e} <= LS-RTM(Born) {ls_born:.2e}"))
}

const PIPELINE_CONFIG: &str = r#"
[grid]
nx = 1
nz = 80

[medium]
source = "layers"
c0 = 1.8

[array]
m = 1

[pulse]
wavelength = 8.9

[rom]
n = 16
rel_tol = 0.01

[noise]
level = 0.01
seed = 11

[output]
dir = "out"
"#;

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(PIPELINE_CONFIG).unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        pipeline::run(&cfg).unwrap().write(&cfg, d).unwrap();
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let identical = names
        .iter()
        .all(|n| std::fs::read(dirs[0].join(n)).unwrap() == std::fs::read(dirs[1].join(n)).unwrap());

    // decode → encode reproduces every binary file exactly
    let read = |n: &str| std::fs::read(dirs[0].join(n)).unwrap();
    let data = read("data.romdata");
    let rom = read("rom.romrom");
    let basis = read("basis.rombase");
    let field = read("q_est.romgrid");
    let round_trip = io::encode_data(&io::decode_data(&data).unwrap()).unwrap() == data
        && io::encode_rom(&io::decode_rom(&rom).unwrap()).unwrap() == rom
        && io::encode_basis(&io::decode_basis(&basis).unwrap()).unwrap() == basis
        && io::encode_field(&io::decode_field(&field).unwrap()).unwrap() == field;
    outcome(
        identical && round_trip && names.len() > 10,
        format!(
            "{} files byte-identical across reruns: {identical}; binary round trips exact: {round_trip}",
            names.len()
        ),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as --nocapture; a filter
    // argument restricts the run to matching criterion numbers.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| only.is_empty() || only.contains(&k);

    let structural = (1..=5).any(wanted).then(structural_runs);
    let s = structural.as_ref();
    let criteria: Vec<(usize, &str, Check<'_>)> = vec![
        (1, "data fit", Box::new(|| data_fit(s.unwrap()))),
        (2, "ROM structure", Box::new(|| structure(s.unwrap()))),
        (3, "dual snapshots", Box::new(|| dual_snapshots(s.unwrap()))),
        (4, "Lanczos extraction", Box::new(|| lanczos(s.unwrap()))),
        (5, "orthogonal invariance", Box::new(|| invariance(s.unwrap()))),
        (6, "Gram oracle", Box::new(gram_oracle)),
        (7, "Born transform", Box::new(born_transform)),
        (8, "point spread", Box::new(psf)),
        (9, "ROM-GN inversion", Box::new(inversion)),
        (10, "noise robustness", Box::new(noise)),
        (11, "conditioning order", Box::new(conditioning)),
        (12, "formats and determinism", Box::new(determinism)),
    ];

    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut ran = 0;
    for (k, name, check) in &criteria {
        if !wanted(*k) {
            continue;
        }
        ran += 1;
        let out = check();
        let tag = match (out.pass, KNOWN_SHORTFALLS.contains(k)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known shortfall)",
            (false, false) => "FAIL",
        };
        println!("criterion {k:2} {name:24} {tag}: {}", out.detail);
        if out.pass {
            passed += 1;
        } else if !KNOWN_SHORTFALLS.contains(k) {
            unexpected.push(*k);
        }
    }
    println!("acceptance: {passed}/{ran} criteria pass");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
