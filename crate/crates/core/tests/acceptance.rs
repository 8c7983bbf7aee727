//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs entirely on the toy backend.
// Negated comparisons are deliberate: a NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::{Array2, Array3};

use chimera_core::analysis::{band_energy, profile, Band, ProfileAxis};
use chimera_core::cache::{decode_bytes, encode_bytes, load_cache, save_cache, FeatureCache, Stage, StageId};
use chimera_core::config::MorphConfig;
use chimera_core::denoiser::{Backend, Image, TextConditioning, ToyBackend, ToyConfig};
use chimera_core::engine::{Engine, ID_A};
use chimera_core::io::{frame_file_name, save_png, sha256_file};
use chimera_core::math::{interp_weights, slerp_vec};
use chimera_core::metrics::{
    frechet_distance, gcs, glcs, lcs, similarity_matrix, EmbeddingCosine, FeatureSet, ProjectionEmbedder,
    SimilarityMatrix,
};
use chimera_core::pipeline::{run_pair, PromptSource, RunRequest};
use chimera_core::prompting::{
    parse_vlm_response, plain_attention, sap_attention, sap_weights, AttentionInputs, HashTextEncoder, PromptTexts,
    PromptTriplet, TextEncoder, ANCHOR_TEMPLATE,
};
use chimera_core::schedule::{build_schedule, IdmMap, ScheduleParams};

use common::Lcg;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_matrix(rng: &mut Lcg, k: usize) -> SimilarityMatrix {
    let s_a = (0..k).map(|_| rng.range(-1.0, 1.0)).collect();
    let s_b = (0..k).map(|_| rng.range(-1.0, 1.0)).collect();
    let s_ab = rng.range(-1.0, 1.0);
    let s_ba = if rng.unit() < 0.5 { s_ab } else { rng.range(-1.0, 1.0) };
    SimilarityMatrix::new(s_a, s_b, 1.0, s_ab, s_ba, 1.0).unwrap()
}

fn c1_metric_oracle() -> Check {
    let mut rng = Lcg::new(1);
    let ks = [1, 2, 3, 5, 14];
    for i in 0..200 {
        let k = ks[i % ks.len()];
        let sim = random_matrix(&mut rng, k);
        let gamma = rng.range(1.0, 3.0);
        let w = interp_weights(k).unwrap();
        let g = gcs(&sim, &w, gamma).unwrap().gcs;
        let l = lcs(&sim).unwrap().lcs;
        let o = common::scores(&sim.s_a, &sim.s_b, [sim.s_aa, sim.s_ab, sim.s_ba, sim.s_bb], gamma);
        let gl = glcs(g, l).unwrap();
        ensure!((g - o.gcs).abs() < 1e-9, "case {i}: gcs {g} vs oracle {}", o.gcs);
        ensure!((l - o.lcs).abs() < 1e-9, "case {i}: lcs {l} vs oracle {}", o.lcs);
        ensure!((gl - o.glcs).abs() < 1e-9, "case {i}: glcs {gl} vs oracle {}", o.glcs);
    }
    let sim = SimilarityMatrix::symmetric(vec![0.9, 0.5, 0.1], vec![0.1, 0.5, 0.9], 0.0).unwrap();
    let r = lcs(&sim).unwrap();
    for (x, y) in r.l.iter().zip([0.36, 1.0, 0.36]) {
        ensure!((x - y).abs() < 1e-12, "three-frame l_k {:?}", r.l);
    }
    ensure!(format!("{:.5}", r.lcs) == "0.57333", "three-frame lcs {}", r.lcs);
    Ok(())
}

fn c2_bounds_and_symmetry() -> Check {
    let mut rng = Lcg::new(2);
    for i in 0..200 {
        let k = 1 + (i % 13);
        let sim = random_matrix(&mut rng, k);
        let w = interp_weights(k).unwrap();
        let gamma = rng.range(1.0, 4.0);
        let (g, l) = (gcs(&sim, &w, gamma).unwrap(), lcs(&sim).unwrap());
        let gl = glcs(g.gcs, l.lcs).unwrap();
        for v in [g.gcs, l.lcs, gl].iter().chain(&g.g).chain(&l.l) {
            ensure!((0.0..=1.0).contains(v), "case {i}: score {v} out of range");
        }
        let rev = sim.reversed();
        let (g2, l2) = (gcs(&rev, &w, gamma).unwrap().gcs, lcs(&rev).unwrap().lcs);
        ensure!((g.gcs - g2).abs() < 1e-9, "case {i}: gcs not reversal invariant");
        ensure!((l.lcs - l2).abs() < 1e-9, "case {i}: lcs not reversal invariant");
        ensure!(
            (gl - glcs(g2, l2).unwrap()).abs() < 1e-9,
            "case {i}: glcs not reversal invariant"
        );
    }
    let mut checked = 0;
    while checked < 100 {
        let k = 2 + checked % 9;
        let sim = random_matrix(&mut rng, k);
        let w = interp_weights(k).unwrap();
        let base = gcs(&sim, &w, 1.0).unwrap();
        if base.g.iter().all(|&x| x == 1.0) {
            continue;
        }
        let g1 = rng.range(1.0, 3.0);
        let g2 = g1 + rng.range(0.01, 3.0);
        let (lo, hi) = (gcs(&sim, &w, g1).unwrap().gcs, gcs(&sim, &w, g2).unwrap().gcs);
        ensure!(hi <= lo, "gamma {g2} gave {hi} > {lo} at gamma {g1}");
        checked += 1;
    }
    Ok(())
}

fn c3_idm_law() -> Check {
    for n_inv in 2..=64usize {
        let ts: Vec<usize> = (0..n_inv).map(|i| i * 10).collect();
        for n_dng in 2..=64usize {
            let m = IdmMap::new(n_dng, ts.clone()).map_err(|e| e.to_string())?;
            let idx: Vec<usize> = (0..n_dng).map(|t| m.index(t).unwrap()).collect();
            ensure!(
                idx[0] == 0 && idx[n_dng - 1] == n_inv - 1,
                "endpoints wrong for {n_inv}/{n_dng}"
            );
            ensure!(idx.windows(2).all(|w| w[0] <= w[1]), "not monotone for {n_inv}/{n_dng}");
            if n_inv == n_dng {
                ensure!(idx.iter().enumerate().all(|(i, &j)| i == j), "not identity at {n_inv}");
            }
        }
    }
    let sched = build_schedule(&ScheduleParams {
        n_inv: 25,
        n_dng: 50,
        ..ScheduleParams::default()
    })
    .unwrap();
    let m = IdmMap::new(50, sched.inv_timesteps().to_vec()).unwrap();
    ensure!(m.index(25).unwrap() == 12, "25-of-50 maps to {}", m.index(25).unwrap());
    Ok(())
}

fn write_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let disc = Image::new(Array3::from_shape_fn((1, 16, 16), |(_, y, x)| {
        let (dy, dx) = (y as f64 - 7.5, x as f64 - 7.5);
        if dy * dy + dx * dx < 30.0 {
            0.9
        } else {
            0.1
        }
    }))
    .unwrap();
    let square = Image::new(Array3::from_shape_fn((1, 16, 16), |(_, y, x)| {
        if (4..12).contains(&y) && (4..12).contains(&x) {
            0.8
        } else {
            0.2
        }
    }))
    .unwrap();
    let (a, b) = (dir.join("a.png"), dir.join("b.png"));
    save_png(&a, &disc).unwrap();
    save_png(&b, &square).unwrap();
    (a, b)
}

fn frame_hashes(dir: &Path, k: usize) -> Vec<String> {
    (0..k)
        .map(|i| sha256_file(dir.join(frame_file_name(i))).unwrap())
        .collect()
}

fn c4_ablation_noops() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = write_inputs(tmp.path());
    let base = MorphConfig {
        frames: 5,
        n_inv: 10,
        n_dng: 10,
        ..MorphConfig::default()
    };
    let anchored = PromptTexts::new("two centred shapes", "a bright disc", "a bright square");
    let run = |name: &str, cfg: &MorphConfig, prompts: &PromptTexts| -> Vec<String> {
        let out = tmp.path().join(name);
        let req = RunRequest {
            path_a: &a,
            path_b: &b,
            out_dir: &out,
            prompts: prompts.clone(),
            prompt_source: PromptSource::Given,
            contact_sheet: false,
        };
        run_pair(cfg, req).unwrap();
        frame_hashes(&out, 5)
    };
    let mut zero = base.clone();
    zero.set_lambda_all(0.0);
    let no_aci = MorphConfig {
        aci: false,
        ..base.clone()
    };
    let h_zero = run("zero", &zero, &anchored);
    let h_off = run("off", &no_aci, &anchored);
    ensure!(h_zero == h_off, "lambda = 0 frames differ from the no-injection path");
    let h_full = run("full", &base, &anchored);
    ensure!(
        h_full != h_zero,
        "injection had no effect, so the comparison proves nothing"
    );

    let h_empty = run("empty", &base, &anchored.without_anchor());
    let h_plain = run(
        "plain",
        &MorphConfig {
            sap: false,
            ..base.clone()
        },
        &anchored,
    );
    ensure!(
        h_empty == h_plain,
        "empty anchor frames differ from plain cross-attention"
    );
    ensure!(
        h_full != h_plain,
        "anchor had no effect, so the comparison proves nothing"
    );
    Ok(())
}

fn random_image(seed: u64) -> Image {
    let mut rng = Lcg::new(seed);
    Image::new(Array3::from_shape_simple_fn((1, 16, 16), || rng.unit())).unwrap()
}

fn c5_inversion_fidelity() -> Check {
    let be = ToyBackend::new(ToyConfig::default());
    let cfg = MorphConfig {
        n_inv: 10,
        n_dng: 10,
        ..MorphConfig::default()
    };
    let eng = Engine::new(&be, cfg).unwrap();
    let e = HashTextEncoder::new(be.descriptor().text_dim, 1)
        .encode("a random texture")
        .unwrap();
    for seed in [11, 12, 13] {
        let img = random_image(seed);
        let mut cache = eng.new_cache();
        let tc = TextConditioning::single(&e);
        let traj = eng.invert(&img, &tc, ID_A, &mut cache).unwrap();
        let back = be
            .decode(eng.denoise(traj.terminal(), &tc).unwrap().terminal())
            .unwrap();
        let diff = back.pixels() - img.pixels();
        let rel = diff.mapv(|v| v * v).sum().sqrt() / img.pixels().mapv(|v| v * v).sum().sqrt();
        ensure!(rel < 1e-3, "seed {seed}: relative pixel error {rel:e}");
    }
    Ok(())
}

fn max_abs(a: &Image, b: &Image) -> f64 {
    (a.pixels() - b.pixels()).iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn c6_degenerate_and_swap() -> Check {
    let be = ToyBackend::new(ToyConfig::default());
    let cfg = MorphConfig {
        frames: 5,
        n_inv: 10,
        n_dng: 10,
        ..MorphConfig::default()
    };
    let eng = Engine::new(&be, cfg).unwrap();
    let enc = HashTextEncoder::new(be.descriptor().text_dim, 1);
    let same = PromptTriplet::embed(PromptTexts::new("a texture", "a texture", "a texture"), &enc).unwrap();
    let img = random_image(21);
    let seq = eng.generate_sequence(&img, &img, &same).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..seq.frames.len() {
        for j in i + 1..seq.frames.len() {
            worst = worst.max(max_abs(&seq.frames[i], &seq.frames[j]));
        }
    }
    ensure!(worst < 1e-4, "identical endpoints: frames differ by {worst:e}");

    let texts = PromptTexts::new("two textures", "a rough texture", "a smooth texture");
    let p = PromptTriplet::embed(texts.clone(), &enc).unwrap();
    let q = PromptTriplet::embed(texts.mirrored(), &enc).unwrap();
    let (a, b) = (random_image(22), random_image(23));
    let fwd = eng.generate_sequence(&a, &b, &p).unwrap();
    let rev = eng.generate_sequence(&b, &a, &q).unwrap();
    let worst = fwd
        .frames
        .iter()
        .zip(rev.frames.iter().rev())
        .map(|(x, y)| max_abs(x, y))
        .fold(0.0, f64::max);
    ensure!(worst < 1e-4, "swapped endpoints: reversed frames differ by {worst:e}");
    Ok(())
}

fn image_from(v: &[f64]) -> Image {
    Image::new(Array3::from_shape_vec((1, 16, 16), v.iter().map(|x| (x + 1.0) / 2.0).collect()).unwrap()).unwrap()
}

fn glcs_of(p: &EmbeddingCosine<ProjectionEmbedder>, a: &Image, b: &Image, frames: &[Image]) -> f64 {
    let sim = similarity_matrix(p, a, b, frames).unwrap();
    let w = interp_weights(frames.len()).unwrap();
    glcs(gcs(&sim, &w, 1.0).unwrap().gcs, lcs(&sim).unwrap().lcs).unwrap()
}

fn c7_smoothness_ordering() -> Check {
    let provider = EmbeddingCosine::new(ProjectionEmbedder::default());
    let k = 9;
    let alphas = interp_weights(k).unwrap();
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    for seed in 0..50u64 {
        let mut rng = Lcg::new(1000 + seed);
        let va: Vec<f64> = (0..256).map(|_| rng.range(-1.0, 1.0)).collect();
        let vb: Vec<f64> = (0..256).map(|_| rng.range(-1.0, 1.0)).collect();
        let at = |alpha: f64| image_from(&slerp_vec(&va, &vb, alpha).unwrap());
        let (a, b) = (image_from(&va), image_from(&vb));
        let smooth: Vec<Image> = alphas.as_slice().iter().map(|&t| at(t)).collect();
        let jump: Vec<Image> = alphas
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                at(if i < k / 2 {
                    (t - 0.15).max(0.0)
                } else {
                    (t + 0.15).min(1.0)
                })
            })
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        while order.iter().enumerate().all(|(i, &j)| i == j) {
            for i in (1..k).rev() {
                let j = (rng.unit() * (i + 1) as f64) as usize;
                order.swap(i, j.min(i));
            }
        }
        let shuffled: Vec<Image> = order.iter().map(|&i| smooth[i].clone()).collect();
        let (gs, gj, gr) = (
            glcs_of(&provider, &a, &b, &smooth),
            glcs_of(&provider, &a, &b, &jump),
            glcs_of(&provider, &a, &b, &shuffled),
        );
        ensure!(gs > gj && gj > gr, "seed {seed}: smooth {gs}, jump {gj}, shuffle {gr}");
        m1 = m1.min(gs - gj);
        m2 = m2.min(gj - gr);
    }
    println!("    smallest margins: smooth-jump {m1:.4}, jump-shuffle {m2:.4}");
    Ok(())
}

fn gaussian_set(rng: &mut Lcg, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|j| rng.gauss() * (1.0 + 0.3 * j as f64) + shift).collect())
        .collect()
}

fn c8_frechet() -> Check {
    let mut rng = Lcg::new(8);
    for d in [3, 8] {
        for trial in 0..10 {
            let x = gaussian_set(&mut rng, 40, d, 0.0);
            let y = gaussian_set(&mut rng, 30, d, 0.5);
            let got = frechet_distance(
                &FeatureSet::new(x.clone()).unwrap(),
                &FeatureSet::new(y.clone()).unwrap(),
            )
            .map_err(|e| e.to_string())?;
            let want = common::frechet(&x, &y);
            let want2 = common::frechet_psd(&x, &y);
            ensure!((want - want2).abs() < 1e-8, "oracles disagree: {want} vs {want2}");
            ensure!((got - want).abs() < 1e-6, "d={d} trial {trial}: {got} vs oracle {want}");
        }
        let x = gaussian_set(&mut rng, 25, d, 0.0);
        let same = frechet_distance(
            &FeatureSet::new(x.clone()).unwrap(),
            &FeatureSet::new(x.clone()).unwrap(),
        )
        .unwrap();
        ensure!(same.abs() < 1e-8, "identical sets give {same}");
        let shift: Vec<f64> = (0..d).map(|_| rng.range(-2.0, 2.0)).collect();
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().zip(&shift).map(|(a, s)| a + s).collect())
            .collect();
        let got = frechet_distance(&FeatureSet::new(x).unwrap(), &FeatureSet::new(y).unwrap()).unwrap();
        let c2: f64 = shift.iter().map(|s| s * s).sum();
        ensure!((got - c2).abs() < 1e-8, "mean shift gives {got}, expected {c2}");
    }
    Ok(())
}

fn c9_sap_math() -> Check {
    let mut rng = Lcg::new(9);
    let mut rand = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.gauss());
    for n_a in [0, 1, 4] {
        let (q, kx, vx, ka, va) = (rand(5, 6), rand(7, 6), rand(7, 6), rand(n_a, 6), rand(n_a, 6));
        let inp = AttentionInputs {
            q: q.view(),
            k_x: kx.view(),
            v_x: vx.view(),
            k_anc: ka.view(),
            v_anc: va.view(),
        };
        let w = sap_weights(&inp).unwrap();
        for row in w.rows() {
            ensure!((row.sum() - 1.0).abs() < 1e-6, "softmax row sums to {}", row.sum());
        }
        if n_a == 0 {
            let plain = plain_attention(q.view(), kx.view(), vx.view()).unwrap();
            let sap = sap_attention(&inp).unwrap();
            ensure!(
                plain.iter().zip(sap.iter()).all(|(x, y)| x.to_bits() == y.to_bits()),
                "empty anchor is not bit-identical to plain attention"
            );
        }
    }
    // One query, two keys with logits 1 and 0.
    let q = ndarray::arr2(&[[1.0]]);
    let kx = ndarray::arr2(&[[1.0]]);
    let ka = ndarray::arr2(&[[0.0]]);
    let v = ndarray::arr2(&[[1.0]]);
    let inp = AttentionInputs {
        q: q.view(),
        k_x: kx.view(),
        v_x: v.view(),
        k_anc: ka.view(),
        v_anc: v.view(),
    };
    let w = sap_weights(&inp).unwrap();
    let e = std::f64::consts::E;
    ensure!(
        (w[[0, 0]] - e / (e + 1.0)).abs() < 1e-12,
        "hand softmax gives {}",
        w[[0, 0]]
    );
    Ok(())
}

fn c10_frequency() -> Check {
    let constant = Array3::from_elem((1, 8, 8), 2.5);
    let hi = band_energy(constant.view(), Band::High, 0.25).unwrap();
    ensure!(hi.abs() < 1e-12, "constant map high band {hi}");
    let board = Array3::from_shape_fn((1, 8, 8), |(_, y, x)| if (x + y) % 2 == 0 { 1.0 } else { -1.0 });
    let (lo, hi) = (
        band_energy(board.view(), Band::Low, 0.25).unwrap(),
        band_energy(board.view(), Band::High, 0.25).unwrap(),
    );
    ensure!(hi > 100.0 * lo.max(1e-12), "checkerboard low {lo}, high {hi}");
    let rows: Vec<Vec<f64>> = board
        .index_axis(ndarray::Axis(0), 0)
        .outer_iter()
        .map(|r| r.to_vec())
        .collect();
    let (olo, ohi) = common::band_means(&rows, 0.25);
    ensure!(
        (lo - olo).abs() < 1e-9 && (hi - ohi).abs() < 1e-9,
        "checkerboard differs from direct DFT"
    );

    let mut rng = Lcg::new(10);
    let mut noise = |amp: f64| Array3::from_shape_simple_fn((4, 8, 8), || 1.0 + amp * rng.gauss()).mapv(|v| v as f32);
    let shapes: Vec<(StageId, [usize; 3])> = [Stage::D, Stage::M, Stage::U]
        .iter()
        .flat_map(|&s| (0..if s == Stage::M { 1 } else { 3 }).map(move |b| (StageId::new(s, b), [4, 8, 8])))
        .collect();
    let mut cache = FeatureCache::with_shapes(shapes.clone());
    for t in [0, 500] {
        for (sid, _) in &shapes {
            let amp = match sid.stage {
                Stage::D => 0.0,
                Stage::M => 0.5,
                Stage::U => 1.0,
            };
            cache.put("A", *sid, t, noise(amp)).unwrap();
        }
    }
    let prof = profile(&cache, ProfileAxis::Layer, 0.25).unwrap();
    let high = |prefix: char| -> Vec<f64> {
        prof.points
            .iter()
            .filter(|p| p.label.starts_with(prefix))
            .map(|p| p.high)
            .collect()
    };
    let (d, m, u) = (high('D'), high('M'), high('U'));
    let dmax = d.iter().copied().fold(f64::MIN, f64::max);
    let umin = u.iter().copied().fold(f64::MAX, f64::min);
    ensure!(
        prof.points.len() == 7,
        "expected 7 layer positions, got {}",
        prof.points.len()
    );
    ensure!(
        dmax < m[0] && m[0] < umin,
        "high band not increasing D {d:?} -> M {m:?} -> U {u:?}"
    );
    Ok(())
}

fn c11_serialization() -> Check {
    let be = ToyBackend::new(ToyConfig::default());
    let eng = Engine::new(
        &be,
        MorphConfig {
            n_inv: 10,
            n_dng: 10,
            ..MorphConfig::default()
        },
    )
    .unwrap();
    let e = HashTextEncoder::new(be.descriptor().text_dim, 1).encode("x").unwrap();
    let mut cache = eng.new_cache();
    eng.invert(&random_image(31), &TextConditioning::single(&e), ID_A, &mut cache)
        .unwrap();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("toy.chimcache");
    save_cache(&cache, &path).map_err(|e| e.to_string())?;
    let back = load_cache(&path).map_err(|e| e.to_string())?;
    ensure!(back.shapes() == cache.shapes(), "shape table changed");
    let pairs: Vec<_> = cache.iter().zip(back.iter()).collect();
    ensure!(
        pairs.len() == cache.len() && back.len() == cache.len(),
        "entry count changed"
    );
    for ((i1, s1, t1, f1), (i2, s2, t2, f2)) in pairs {
        ensure!((i1, s1, t1) == (i2, s2, t2), "key changed");
        ensure!(
            f1.iter().zip(f2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()),
            "values changed at {s1} t={t1}"
        );
    }
    let mut bytes = encode_bytes(&cache);
    ensure!(decode_bytes(&bytes).is_ok(), "clean bytes rejected");
    bytes[0] ^= 0xff;
    ensure!(decode_bytes(&bytes).is_err(), "corrupted magic accepted");
    Ok(())
}

fn c12_parser() -> Check {
    let fixtures = common::parser_fixtures();
    ensure!(fixtures.len() == 20, "fixture set has {} cases", fixtures.len());
    for (i, (text, want)) in fixtures.iter().enumerate() {
        match (parse_vlm_response(text), want) {
            (Ok(p), Some((anc, a, b))) => ensure!(
                p.anchor == *anc && p.caption_a == *a && p.caption_b == *b,
                "case {i}: parsed {p:?}"
            ),
            (Err(_), None) => {}
            (Ok(p), None) => return Err(format!("case {i}: accepted incomplete block as {p:?}")),
            (Err(e), Some(_)) => return Err(format!("case {i}: rejected valid block: {e}")),
        }
    }
    let block = ANCHOR_TEMPLATE
        .split("Output format.")
        .nth(1)
        .ok_or("template has no output block")?;
    let p = parse_vlm_response(block).map_err(|e| format!("template output block rejected: {e}"))?;
    ensure!(
        p.anchor == "compact shared concept",
        "template anchor parsed as {:?}",
        p.anchor
    );
    Ok(())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("metric oracle equivalence", c1_metric_oracle),
        ("metric bounds and symmetry", c2_bounds_and_symmetry),
        ("timestep mapping law", c3_idm_law),
        ("ablation no-ops by file hash", c4_ablation_noops),
        ("inversion fidelity", c5_inversion_fidelity),
        ("degenerate morph and swap symmetry", c6_degenerate_and_swap),
        ("smoothness ordering", c7_smoothness_ordering),
        ("frechet distance", c8_frechet),
        ("anchor attention math", c9_sap_math),
        ("frequency analysis", c10_frequency),
        ("cache serialization", c11_serialization),
        ("response parser", c12_parser),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(()) => println!("PASS {:>2} {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
