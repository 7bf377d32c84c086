use mmlpcnet::attention::{demo_alignments, guidance_loss};
use mmlpcnet::features::{parse_feature_file, serialize_features, synthetic_frames};
use mmlpcnet::filterbank::{design_prototype, DEFAULT_BANDS, DEFAULT_TAPS};
use mmlpcnet::io::{
    encode_wav, gen_random_weights, load_weights, parse_weights, read_features, save_weights, serialize_weights,
    write_features, write_wav,
};
use mmlpcnet::vocoder::{synthesize, synthesize_with_probe, Mode, SampleRecord, SynthesisProbe};
use mmlpcnet::{Error, FRAME_SIZE};

#[derive(Default)]
struct Collect(Vec<SampleRecord>);

impl SynthesisProbe for Collect {
    fn on_sample(&mut self, r: &SampleRecord) {
        self.0.push(*r);
    }
}

#[test]
fn weights_survive_a_file_round_trip_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    for (mode, seed) in [(Mode::Mmt, 3), (Mode::Baseline, 4)] {
        let w = gen_random_weights(seed, mode).unwrap();
        let path = dir.path().join(format!("{mode}.mmlp"));
        save_weights(&w, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back, w);
        assert_eq!(serialize_weights(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn corrupted_containers_are_rejected() {
    let bytes = serialize_weights(&gen_random_weights(1, Mode::Mmt).unwrap());
    for cut in [0, 3, 4, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(parse_weights(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(parse_weights(&bad_magic), Err(Error::Format { .. })));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(parse_weights(&trailing).is_err());
}

#[test]
fn feature_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let frames = synthetic_frames(37, 8);
    let path = dir.path().join("f.f32feat");
    write_features(&frames, &path).unwrap();
    assert_eq!(read_features(&path).unwrap(), frames);
    assert_eq!(parse_feature_file(&serialize_features(&frames)).unwrap(), frames);
}

#[test]
fn synthesis_length_and_determinism_across_seeds() {
    let fb = design_prototype(DEFAULT_BANDS, DEFAULT_TAPS).unwrap();
    let frames = synthetic_frames(6, 2);
    for mode in [Mode::Mmt, Mode::Baseline] {
        let w = gen_random_weights(10, mode).unwrap();
        let mut outputs = Vec::new();
        for seed in 0..3 {
            let a = synthesize(&frames, &w, mode, &fb, 1.0, seed).unwrap();
            let b = synthesize(&frames, &w, mode, &fb, 1.0, seed).unwrap();
            assert_eq!(a.len(), FRAME_SIZE * frames.len());
            assert!(a.iter().all(|v| v.is_finite()));
            assert_eq!(a, b, "{mode} seed {seed} not reproducible");
            outputs.push(a);
        }
        assert_ne!(outputs[0], outputs[1], "{mode}: seed has no effect");
    }
}

#[test]
fn mode_mismatch_is_a_parameter_error() {
    let fb = design_prototype(DEFAULT_BANDS, DEFAULT_TAPS).unwrap();
    let w = gen_random_weights(0, Mode::Baseline).unwrap();
    let err = synthesize(&synthetic_frames(2, 0), &w, Mode::Mmt, &fb, 1.0, 0).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)));
}

#[test]
fn every_band_stream_advances_in_order() {
    let fb = design_prototype(DEFAULT_BANDS, DEFAULT_TAPS).unwrap();
    let w = gen_random_weights(5, Mode::Mmt).unwrap();
    let frames = synthetic_frames(3, 1);
    let mut probe = Collect::default();
    synthesize_with_probe(&frames, &w, Mode::Mmt, &fb, 1.0, 0, &mut probe).unwrap();
    assert_eq!(probe.0.len(), FRAME_SIZE * frames.len());
    for band in 0..DEFAULT_BANDS {
        let idx: Vec<u64> = probe.0.iter().filter(|r| r.band == band).map(|r| r.index).collect();
        assert_eq!(idx, (0..idx.len() as u64).collect::<Vec<_>>());
        assert_eq!(idx.len(), FRAME_SIZE * frames.len() / DEFAULT_BANDS);
    }
    for r in &probe.0 {
        assert!((r.sample - (r.excitation_value + r.prediction)).abs() < 1e-12);
    }
}

#[test]
fn wav_output_has_the_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<f64> = (0..480).map(|i| (i as f64 * 0.05).sin() * 0.5).collect();
    let bytes = encode_wav(&samples).unwrap();
    assert_eq!(bytes.len(), 44 + 2 * samples.len());
    assert_eq!(&bytes[..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
    let path = dir.path().join("o.wav");
    write_wav(&samples, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn demo_alignments_feed_the_guidance_loss() {
    let demo = demo_alignments(12, 40, 3).unwrap();
    let l1 = guidance_loss(&demo.location, &demo.forward, &demo.gmm, 1.0).unwrap();
    assert!(l1 > 0.0 && l1.is_finite());
    assert_eq!(guidance_loss(&demo.forward, &demo.forward, &demo.forward, 1.0).unwrap(), 0.0);
    for pair in demo.gmm_means.windows(2) {
        assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| b > a));
    }
}
