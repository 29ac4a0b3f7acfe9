//! Scratch experiment (temporary): controller training + correlation-vs-shift
//! lag diagnostics at desk scale.
//! Run: cargo test -p spikectl-core --test exp_controller -- --nocapture --ignored

use spikectl_core::config::PipelineConfig;
use spikectl_core::eval::correlation_vs_shift;
use spikectl_core::pipeline::*;

#[test]
#[ignore]
fn controller_lag_probe() {
    let mut cfg = PipelineConfig::default();
    cfg.dataset.round0_minutes = 8.0;
    cfg.dataset.episode_seconds = 40.0;
    cfg.run.seed = 7;
    cfg.training.integrator.epochs = 25;
    cfg.training.controller.epochs = 30;

    let t0 = std::time::Instant::now();
    let round0 = generate_round(
        &cfg,
        &RoundSpec {
            name: "r0",
            minutes: cfg.dataset.round0_minutes,
            controller: GenController::Expert,
            disturbed: false,
            round_index: 0,
        },
    )
    .unwrap();
    let corpus = corpus_from_episodes(round0).unwrap();
    println!("gen {:.1}s", t0.elapsed().as_secs_f64());

    let t1 = std::time::Instant::now();
    let (int_run, int_data) = train_integrator_stage(&corpus, &cfg).unwrap();
    println!(
        "integrator: final {:.5} held-out {:.5} in {:.0}s",
        int_run.metrics.last().unwrap().total,
        int_run.held_out.as_ref().map(|h| h.total).unwrap_or(f64::NAN),
        t1.elapsed().as_secs_f64()
    );
    drop(int_data);

    for shift in [0usize, 6] {
        let mut tc = cfg.training.controller.clone();
        tc.target_shift = shift;
        let t2 = std::time::Instant::now();
        let (run, data) = train_controller_stage(&corpus, &cfg, &tc, Some(&int_run.net)).unwrap();
        println!(
            "controller d={shift}: final {:.5} held-out {:.5} rho {:?} in {:.0}s",
            run.metrics.last().unwrap().total,
            run.held_out.as_ref().map(|h| h.total).unwrap_or(f64::NAN),
            run.held_out.as_ref().map(|h| h.rho.clone()).unwrap_or_default(),
            t2.elapsed().as_secs_f64()
        );

        // Correlation vs shift on held-out, same-tick targets.
        let mut aligned = data.val.clone();
        if aligned.is_empty() {
            panic!("no val");
        }
        // Rebuild val batch with shift 0 for alignment.
        let val0 = role_data(
            &corpus,
            spikectl_core::dataset::Role::Controller,
            0,
            tc.seq_len,
            cfg.dataset.test_fraction,
            cfg.run.seed ^ 0xC71,
        )
        .unwrap()
        .val;
        aligned = val0;
        let mut net = run.net.clone();
        net.input_norm = spikectl_core::InputNorm::identity(net.n_inputs());
        let corr = correlation_vs_shift(&net, &aligned.samples(), 20, &net.output_labels.clone())
            .unwrap();
        println!(
            "controller d={shift}: peak {} mean-rho-at-peak {:.3}",
            corr.peak_shift,
            corr.mean_rho[(corr.peak_shift + 20) as usize]
        );
        let spars = spikectl_core::eval::sparsity(&net, &aligned.samples()).unwrap();
        println!("controller d={shift}: sparsity {:.3}", spars.mean);
    }
}
