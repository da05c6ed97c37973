use relight_core::estimator::Estimator;
use relight_core::harness::*;
use relight_core::io::{parse_lights, preset_to_json};

const FIXTURE: &str = include_str!("fixtures/preset_k2.json");

#[test]
fn shared_preset_fixture_round_trips_byte_for_byte() {
    let loaded = parse_lights(FIXTURE).unwrap();
    assert!(loaded.notes.is_empty());
    assert_eq!(loaded.params.k(), 2);
    assert_eq!(preset_to_json(&loaded.params, &loaded.shading) + "\n", FIXTURE);
}

#[test]
fn fixture_error_cases() {
    let err = parse_lights(include_str!("fixtures/preset_k_mismatch.json")).unwrap_err();
    assert!(err.to_string().contains('k'), "{err}");
    let loaded = parse_lights(include_str!("fixtures/preset_no_sigma.json")).unwrap();
    assert_eq!(loaded.shading.sigma1, 0.01);
    assert!(loaded.notes.iter().any(|n| n.contains("sigma1")));
}

fn quick_estimator(k: usize) -> Estimator {
    let mut est = Estimator::new(k);
    est.fit.coarse_iters = 20;
    est.fit.refine_iters = 10;
    est
}

#[test]
fn ablation_report_shape_and_determinism() {
    let scenes = planted_scenes(2, 24, 1).unwrap();
    let losses = standard_loss_configs();
    let a = run_ablation(&scenes, &[3, 9], &losses, &quick_estimator(9)).unwrap();
    assert_eq!(a.rows.len(), 5);
    assert_eq!(a.scenes, vec!["planted_0", "planted_1"]);
    assert!(a.rows.iter().all(|r| r.mean_loss.is_finite()));
    assert!(a.row("loss", "pixel").is_some() && a.row("loss", "full").is_some());
    let b = run_ablation(&scenes, &[3, 9], &losses, &quick_estimator(9)).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn scene_directory_loading() {
    use relight_core::io::{save_depth, save_image};
    let dir = tempfile::tempdir().unwrap();
    for (i, s) in planted_scenes(2, 8, 3).unwrap().iter().enumerate() {
        let sub = dir.path().join(format!("scene_{i}"));
        std::fs::create_dir(&sub).unwrap();
        save_image(sub.join("input.png"), &s.input).unwrap();
        save_image(sub.join("target.png"), &s.target).unwrap();
        if i == 0 {
            save_depth(sub.join("depth.png"), s.depth.as_ref().unwrap()).unwrap();
        }
    }
    let scenes = load_scene_dir(dir.path()).unwrap();
    assert_eq!(scenes.len(), 2);
    assert!(scenes[0].depth.is_some() && scenes[1].depth.is_none());
    assert!(load_scene_dir(dir.path().join("missing")).is_err());
}

#[test]
fn amortized_cost_does_not_grow_with_interval() {
    let cfg = BenchConfig {
        iters: 3,
        ..BenchConfig::new(64, 48, 3)
    };
    let r = bench_render(&cfg).unwrap();
    assert_eq!(
        r.amortized.iter().map(|a| a.interval).collect::<Vec<_>>(),
        vec![1, 3, 10]
    );
    let fit = r.fit_ms.unwrap();
    assert!(fit > r.median_ms);
    assert!(r.amortized.windows(2).all(|w| w[1].ms_per_frame <= w[0].ms_per_frame));
    assert!(r.resize_ms.unwrap() <= fit);
}

#[test]
fn bench_output_independent_of_threads() {
    let run = |threads| {
        bench_render(&BenchConfig {
            iters: 2,
            threads,
            measure_fit: false,
            ..BenchConfig::new(50, 30, 9)
        })
        .unwrap()
    };
    let (one, eight) = (run(1), run(8));
    assert_eq!(one.checksum, eight.checksum);
    assert!(bench_render(&BenchConfig {
        iters: 0,
        ..BenchConfig::new(4, 4, 1)
    })
    .is_err());
}
