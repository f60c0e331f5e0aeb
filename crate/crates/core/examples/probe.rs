// Scratch calibration probe (not part of the test suite).

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use sonarscape::beamform::{build_energyscape, default_geometry, DirectionList};
use sonarscape::seed::rng_for;
use sonarscape::signal::{
    generate_chirp, matched_filter, pdm_decode, pdm_encode, ChirpSpec, PdmFrame, Waveform,
};
use sonarscape::simulate::{
    make_scene, render_echoes, Damage, Material, Reflector, RenderParams, Scene, SignatureConfig,
};

fn localization_trials(n_trials: u64) {
    let geom = default_geometry(0);
    let dirs = DirectionList::standard();
    let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
    let fs = chirp.sample_rate;
    let c = geom.speed_of_sound;
    let mut row_hits = 0;
    let mut range_hits = 0;
    let t0 = Instant::now();
    for trial in 0..n_trials {
        let mut rng = rng_for(2024, "loc", trial);
        let di = rng.random_range(0..dirs.len());
        let dir = dirs.get(di);
        let range = rng.random_range(0.5..4.0);
        let scene = Scene {
            reflectors: vec![Reflector {
                azimuth_deg: dir.azimuth_deg,
                elevation_deg: dir.elevation_deg,
                range_m: range,
                amplitude: 1.0,
            }],
            material: Material::Asphalt,
            damages: BTreeSet::new(),
            seed: trial,
        };
        let params = RenderParams {
            n_samples: 16384,
            noise_db: 20.0,
            seed: trial,
        };
        let mut channels = render_echoes(&scene, &geom, &chirp, &params).unwrap();
        let peak = channels
            .iter()
            .flat_map(|ch| ch.samples.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.9 {
            let s = 0.9 / peak;
            for ch in &mut channels {
                for v in &mut ch.samples {
                    *v *= s;
                }
            }
        }
        let encoded: Vec<_> = channels
            .iter()
            .map(|ch| pdm_encode(ch, 10).unwrap())
            .collect();
        let frame = PdmFrame::new(encoded, fs * 10.0).unwrap();
        let decoded = pdm_decode(&frame).unwrap();
        let filtered: Vec<Waveform> = decoded
            .iter()
            .map(|ch| matched_filter(ch, &chirp).unwrap())
            .collect();
        let scape = build_energyscape(&filtered, &geom, &dirs).unwrap();
        let (row, col) = scape.argmax();

        let u_true = dir.unit_vector();
        let u_got = dirs.get(row).unit_vector();
        let dotp = u_true[0] * u_got[0] + u_true[1] * u_got[1] + u_true[2] * u_got[2];
        let row_ok = dotp >= 0.9999;
        let expect_col = (2.0 * range / c * fs).round() as i64;
        let range_ok = (col as i64 - expect_col).abs() <= 3;
        if row_ok {
            row_hits += 1;
        }
        if range_ok {
            range_hits += 1;
        }
        if !row_ok || !range_ok {
            println!(
                "  trial {trial}: dir {di} ({}, {}) r {:.2} -> row {row} col {col} (expect {expect_col}) row_ok={row_ok} range_ok={range_ok}",
                dir.azimuth_deg, dir.elevation_deg, range
            );
        }
    }
    println!(
        "localization: {}/{} rows, {}/{} ranges, {:.1} s",
        row_hits,
        n_trials,
        range_hits,
        n_trials,
        t0.elapsed().as_secs_f64()
    );
}

fn scene_stats() {
    // quick look at per-material energyscape statistics
    let cfg = SignatureConfig {
        sensor_height: 0.45,
        height_jitter: 0.03,
        ..SignatureConfig::default()
    };
    let geom = default_geometry(0);
    let dirs = DirectionList::standard();
    let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
    let t0 = Instant::now();
    for material in Material::all() {
        let mut spikiness = Vec::new();
        let mut means = Vec::new();
        let mut tops = Vec::new();
        let mut spreads = Vec::new();
        for k in 0..12u64 {
            let scene = make_scene(material, &BTreeSet::new(), k, &cfg);
            let params = RenderParams {
                n_samples: 4096,
                noise_db: 15.0,
                seed: k,
            };
            let channels = render_echoes(&scene, &geom, &chirp, &params).unwrap();
            let filtered: Vec<Waveform> = channels
                .iter()
                .map(|ch| matched_filter(ch, &chirp).unwrap())
                .collect();
            let scape = build_energyscape(&filtered, &geom, &dirs).unwrap();
            let mean = scape.values().iter().sum::<f64>() / scape.values().len() as f64;
            let max = scape.values().iter().fold(0.0f64, |m, v| m.max(*v));
            spikiness.push(max / mean);
            means.push(mean);
            // row-energy concentration
            let row_e: Vec<f64> = (0..scape.rows())
                .map(|r| scape.row(r).iter().sum::<f64>())
                .collect();
            let total: f64 = row_e.iter().sum();
            let top = row_e.iter().cloned().fold(0.0f64, f64::max);
            let above_half = row_e.iter().filter(|e| **e >= 0.5 * top).count();
            tops.push(top / total);
            spreads.push(above_half as f64);
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "{:?}: spikiness avg {:.1} [{:.1}, {:.1}], mean avg {:.3e} [{:.3e}, {:.3e}], top-row frac [{:.3}, {:.3}], rows>=half [{:.0}, {:.0}]",
            material,
            avg(&spikiness),
            lo(&spikiness),
            hi(&spikiness),
            avg(&means),
            lo(&means),
            hi(&means),
            lo(&tops),
            hi(&tops),
            lo(&spreads),
            hi(&spreads),
        );
    }
    println!("scene stats took {:.1} s", t0.elapsed().as_secs_f64());
    let _ = Damage::all();
}

fn mini_experiment(per_class: usize, n_components: usize) {
    use sonarscape::cli::{cmd_experiment, cmd_process, cmd_simulate, Task};
    use sonarscape::config::RunConfig;
    use sonarscape::simulate::SynthClassSpec;

    let base = std::env::temp_dir().join(format!("sonarscape-probe-{}", per_class));
    let _ = std::fs::remove_dir_all(&base);
    let mut cfg = RunConfig::with_seed(0);
    cfg.features.n_components = n_components;
    cfg.paths.dataset_dir = base.join("data");
    cfg.paths.model_dir = base.join("models");
    cfg.paths.output_dir = base.join("out");
    cfg.signal.record_samples = 8192;
    cfg.simulate.noise_floor_db = 46.0;
    cfg.experiment.min_class_count = 1;
    for material in Material::all() {
        cfg.simulate.classes.push(SynthClassSpec {
            material,
            damages: vec![],
            count: per_class,
        });
    }
    let t0 = Instant::now();
    cmd_simulate(&cfg).unwrap();
    println!("simulate: {:.1} s", t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    cmd_process(&cfg).unwrap();
    println!("process: {:.1} s", t1.elapsed().as_secs_f64());
    let t2 = Instant::now();
    let report = cmd_experiment(&cfg, Task::Material).unwrap();
    println!("experiment: {:.1} s", t2.elapsed().as_secs_f64());
    println!("{}", report.table());
}

fn feature_geometry(per_class: usize) {
    use sonarscape::beamform::cfar_cleanup;

    let cfg = SignatureConfig::default();
    let geom = default_geometry(0);
    let dirs = DirectionList::standard();
    let chirp = generate_chirp(&ChirpSpec::default()).unwrap();

    // full-chain CFAR'd scapes
    let mut scapes = Vec::new();
    let mut labels = Vec::new();
    for material in Material::all() {
        for k in 0..per_class as u64 {
            let scene = make_scene(material, &BTreeSet::new(), k * 31 + material as u64, &cfg);
            let params = RenderParams {
                n_samples: 8192,
                noise_db: f64::INFINITY,
                seed: 0,
            };
            let mut channels = render_echoes(&scene, &geom, &chirp, &params).unwrap();
            let peak = channels
                .iter()
                .flat_map(|c| c.samples.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.9 {
                let s = 0.9 / peak;
                for ch in &mut channels {
                    for v in &mut ch.samples {
                        *v *= s;
                    }
                }
            }
            // absolute sensor noise at 40 dB below full scale
            {
                use rand_distr::{Distribution, Normal};
                let sigma = 10f64.powf(-40.0 / 20.0);
                for (c, ch) in channels.iter_mut().enumerate() {
                    let mut rng = rng_for(k * 77 + material as u64, "sensor-noise", c as u64);
                    let normal = Normal::new(0.0, sigma).unwrap();
                    for v in &mut ch.samples {
                        *v = (*v + normal.sample(&mut rng)).clamp(-1.0, 1.0);
                    }
                }
            }
            let encoded: Vec<_> = channels
                .iter()
                .map(|ch| pdm_encode(ch, 10).unwrap())
                .collect();
            let frame = PdmFrame::new(encoded, chirp.sample_rate * 10.0).unwrap();
            let decoded = pdm_decode(&frame).unwrap();
            let filtered: Vec<Waveform> = decoded
                .iter()
                .map(|ch| matched_filter(ch, &chirp).unwrap())
                .collect();
            let scape = build_energyscape(&filtered, &geom, &dirs).unwrap();
            let clean = cfar_cleanup(&scape, 4, 16, 1e-12).unwrap();
            scapes.push(clean);
            labels.push(material);
        }
    }

    // PCA input vectors: mean-scape subtraction + pooling + flatten
    let params = sonarscape::features::VectorPipelineParams {
        pool_kernel: 5,
        n_components: 32,
        whiten_eps: 1e-12,
    };
    let model = sonarscape::features::fit_vector_pipeline(&scapes, &params).unwrap();
    println!(
        "eigenvalues: l1 {:.3e}, l4 {:.3e}, l16 {:.3e}, l32 {:.3e}",
        model.pca_eigenvalues[0],
        model.pca_eigenvalues[3.min(model.n_components - 1)],
        model.pca_eigenvalues[15.min(model.n_components - 1)],
        model.pca_eigenvalues[model.n_components - 1],
    );

    // class geometry of the whitened features
    let feats: Vec<Vec<f64>> = scapes
        .iter()
        .map(|s| sonarscape::features::apply_vector_pipeline(&model, s).unwrap())
        .collect();
    for comp in 0..6 {
        let mut line = format!("comp {}: ", comp);
        for material in Material::all() {
            let vals: Vec<f64> = feats
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == material)
                .map(|(f, _)| f[comp])
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64)
                .sqrt();
            line.push_str(&format!("{:?} {:+.2}+-{:.2}  ", material, m, sd));
        }
        println!("{}", line);
    }

    // raw pooled vectors (pre-PCA): aggregate stats + strongest Fisher dims
    let pooled: Vec<Vec<f64>> = scapes
        .iter()
        .map(|s| {
            let mut diff = s.clone();
            for (d, m) in diff.values_mut().iter_mut().zip(model.mean_scape.values()) {
                *d -= m;
            }
            sonarscape::features::maxpool_range(&diff, 5)
                .unwrap()
                .values()
                .to_vec()
        })
        .collect();
    for material in Material::all() {
        let rows: Vec<&Vec<f64>> = pooled
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == material)
            .map(|(p, _)| p)
            .collect();
        let agg: Vec<f64> = rows
            .iter()
            .map(|p| p.iter().sum::<f64>() / p.len() as f64)
            .collect();
        let m = agg.iter().sum::<f64>() / agg.len() as f64;
        let sd =
            (agg.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / agg.len() as f64).sqrt();
        let mx: Vec<f64> = rows
            .iter()
            .map(|p| p.iter().cloned().fold(f64::MIN, f64::max))
            .collect();
        let mxm = mx.iter().sum::<f64>() / mx.len() as f64;
        println!(
            "{:?}: pooled-mean {:+.3}+-{:.3}, pooled-max avg {:.1}",
            material, m, sd, mxm
        );
    }
    // Fisher score per dim: between-class variance / within-class variance
    let dims = pooled[0].len();
    let n = pooled.len() as f64;
    let mut best: Vec<(f64, usize)> = Vec::new();
    for d in 0..dims {
        let all_mean: f64 = pooled.iter().map(|p| p[d]).sum::<f64>() / n;
        let mut between = 0.0;
        let mut within = 0.0;
        for material in Material::all() {
            let vals: Vec<f64> = pooled
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == material)
                .map(|(p, _)| p[d])
                .collect();
            let cm = vals.iter().sum::<f64>() / vals.len() as f64;
            between += vals.len() as f64 * (cm - all_mean) * (cm - all_mean);
            within += vals.iter().map(|v| (v - cm) * (v - cm)).sum::<f64>();
        }
        best.push((between / within.max(1e-12), d));
    }
    best.sort_by(|a, b| b.0.total_cmp(&a.0));
    let fisher_top: Vec<String> = best[..10]
        .iter()
        .map(|(f, d)| format!("dim {} (row {}) F={:.2}", d, d / (pooled[0].len() / 91), f))
        .collect();
    println!("top Fisher dims: {}", fisher_top.join(", "));
    let median = best[dims / 2].0;
    println!("median Fisher: {:.4}, #dims with F>1: {}", median, best.iter().filter(|(f, _)| *f > 1.0).count());
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(|s| s.as_str()).unwrap_or("all");
    if what == "loc" || what == "all" {
        localization_trials(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(12));
    }
    if what == "stats" || what == "all" {
        scene_stats();
    }
    if what == "exp" {
        mini_experiment(
            args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40),
            args.get(3).and_then(|s| s.parse().ok()).unwrap_or(256),
        );
    }
    if what == "feat" {
        feature_geometry(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20));
    }
}
