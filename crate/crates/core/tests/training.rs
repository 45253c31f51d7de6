use mgpc_core::codec::{compress, decompress, normalize, prepare_input, CodecModel, Topology};
use mgpc_core::pointcloud::toy_cloud;
use mgpc_core::tensor::{Tape, Tensor};
use mgpc_core::training::{
    crop_losses, train, trc_path, AuxNorm, ConstraintSet, LossWeights, Rounding, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mic_path_matches_the_decoder_output() {
    let cloud = toy_cloud(300, 2).unwrap();
    let model = CodecModel::init(Topology::TOY, 3, 3);
    let (perm, x) = prepare_input(&cloud).unwrap();

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let mut noise = ChaCha8Rng::seed_from_u64(1);
    let t = crop_losses(
        &mut tape,
        &bound,
        &x,
        cloud.len(),
        ConstraintSet::Mic,
        LossWeights::with_lambda(1000.0),
        AuxNorm::Mse,
        &mut noise,
        &mut Rounding::live(),
    )
    .unwrap();
    let x_mi = tape.value(t.x_mi).clone();

    let bytes = compress(&model, &cloud).unwrap().to_bytes();
    let decoded = decompress(&model, &bytes, cloud.positions()).unwrap();
    assert!(decoded.warnings.is_empty());
    let expected = normalize(decoded.cloud.colors()).unwrap();
    for (rank, &i) in perm.order.iter().enumerate() {
        assert_eq!(&x_mi.data()[rank * 3..rank * 3 + 3], &expected.data()[i * 3..i * 3 + 3]);
    }
}

#[test]
fn transformation_path_leaves_hyper_networks_untouched() {
    let cloud = toy_cloud(64, 4).unwrap();
    let model = CodecModel::init(Topology::TOY, 5, 0);
    let (_, x) = prepare_input(&cloud).unwrap();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let xv = tape.constant(x);
    let y = bound.analyze(&mut tape, xv).unwrap();
    let (_, l_tr) = trc_path(&mut tape, &bound, xv, y, AuxNorm::Mse).unwrap();
    assert!(tape.value(l_tr).item() > 0.0);
    let mut grads = tape.backward(l_tr).unwrap();
    for (name, &v) in model.names().iter().zip(bound.vars()) {
        // Parameters the loss never reaches have no gradient entry at all.
        let nonzero = grads.take(v).is_ok_and(|g| g.data().iter().any(|&v| v != 0.0));
        if name.starts_with("ha") || name.starts_with("hs") || name.starts_with("prior") {
            assert!(!nonzero, "{name} received gradient from the transformation path");
        } else if name.ends_with(".w") {
            assert!(nonzero, "{name} received no gradient");
        }
    }
}

#[test]
fn total_loss_recomposes_from_terms() {
    let cloud = toy_cloud(200, 6).unwrap();
    let model = CodecModel::init(Topology::TOY, 7, 3);
    let (_, x) = prepare_input(&cloud).unwrap();
    let w = LossWeights {
        lambda: 1000.0,
        alpha: 700.0,
        beta: 100.0,
    };
    for c in ConstraintSet::ALL {
        for norm in [AuxNorm::Mse, AuxNorm::SumSquares] {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false);
            let mut noise = ChaCha8Rng::seed_from_u64(2);
            let t = crop_losses(&mut tape, &bound, &x, cloud.len(), c, w, norm, &mut noise, &mut Rounding::live())
                .unwrap();
            let v = |var| tape.value(var).item();
            assert_eq!(t.tr.is_some(), c.has_trc());
            assert_eq!(t.lc.is_some(), c.has_lcc());
            let fidelity = if c.has_mic() { v(t.mi) } else { v(t.distortion) };
            let mut expected = v(t.rate) + w.lambda * fidelity;
            if let Some(tr) = t.tr {
                expected += w.alpha * v(tr);
            }
            if let Some(lc) = t.lc {
                expected += w.beta * v(lc);
            }
            let total = v(t.total);
            assert!((total - expected).abs() <= 1e-12 * expected.abs(), "{c}: {total} vs {expected}");
        }
    }
}

#[test]
fn combined_set_adds_both_auxiliary_terms() {
    let cloud = toy_cloud(100, 8).unwrap();
    let model = CodecModel::init(Topology::TOY, 9, 3);
    let (_, x) = prepare_input(&cloud).unwrap();
    let w = LossWeights::with_lambda(1000.0);
    let total = |c| {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let mut noise = ChaCha8Rng::seed_from_u64(3);
        let t = crop_losses(&mut tape, &bound, &x, cloud.len(), c, w, AuxNorm::Mse, &mut noise, &mut Rounding::live())
            .unwrap();
        (tape.value(t.total).item(), t.lc.map(|lc| tape.value(lc).item()))
    };
    let (trc, _) = total(ConstraintSet::Trc);
    let (both, lc) = total(ConstraintSet::TrcLcc);
    let diff = both - trc - w.beta * lc.unwrap();
    assert!(diff.abs() <= 1e-9 * both.abs());
}

#[test]
fn baseline_loss_decreases() {
    let cloud = toy_cloud(4000, 10).unwrap();
    let config = TrainConfig {
        epochs: 20,
        crops_per_epoch: 4,
        batch_size: 2,
        k_crop: 512,
        lr0: 3e-3,
        ..TrainConfig::desk(ConstraintSet::Baseline, 1000.0)
    };
    let (_, log) = train(&[cloud], &config).unwrap();
    assert_eq!(log.len(), 20);
    assert!(log.iter().all(|e| e.total.is_finite()));
    assert!(log[19].total < log[0].total, "{} -> {}", log[0].total, log[19].total);
}

#[test]
fn identity_codec_total_is_rate_for_every_set() {
    // 16-point crop with colors on the 1/255 grid that divide exactly.
    let model = CodecModel::identity(0);
    let data: Vec<f64> = (0..16 * 3).map(|i| ((i * 16) % 256) as f64 / 255.0).collect();
    let x = Tensor::new(vec![16, 3], data).unwrap();
    for c in ConstraintSet::ALL {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let mut noise = ChaCha8Rng::seed_from_u64(4);
        let t = crop_losses(
            &mut tape,
            &bound,
            &x,
            16,
            c,
            LossWeights::with_lambda(1000.0),
            AuxNorm::Mse,
            &mut noise,
            &mut Rounding::live(),
        )
        .unwrap();
        let total = tape.value(t.total).item();
        let rate = tape.value(t.rate).item();
        assert!((total - rate).abs() <= 1e-20, "{c}: {total} vs {rate}");
    }
}
