use proptest::prelude::*;
use voxelnet::autoencoder::SparseAutoencoder;
use voxelnet::classifier::MlpClassifier;
use voxelnet::convnet::{ConvFeatureBank, FeatureVector};
use voxelnet::dataio::{decode_patch_cache, decode_volume, encode_patch_cache, encode_volume};
use voxelnet::kernels::{convolve2d_valid, convolve3d_valid, maxpool2d, maxpool3d, sigmoid};
use voxelnet::rng::Rng;
use voxelnet::{Matrix, Tensor3};

fn random_tensor(rng: &mut Rng, shape: (usize, usize, usize)) -> Tensor3 {
    Tensor3::from_fn(shape, |_, _, _| rng.normal()).unwrap()
}

// Feature vector layout: filter-major, canonical order inside each pooled map.
#[test]
fn volumetric_stacking_matches_manual_composition() {
    let mut rng = Rng::new(4);
    let ae = SparseAutoencoder::init(27, 4, 1.0, 9).unwrap();
    let scan = random_tensor(&mut rng, (9, 10, 11));
    let bank = ConvFeatureBank::from_autoencoder_3d(&ae, (3, 3, 3), (2, 3, 2), scan.shape()).unwrap();
    let fv = bank.featurize(&scan).unwrap();

    let mut manual = Vec::new();
    for (w, b) in ae.extract_bases_3d((3, 3, 3)).unwrap() {
        let fm = convolve3d_valid(&scan, &w).unwrap().map(|v| sigmoid(v + b));
        manual.extend_from_slice(maxpool3d(&fm, (2, 3, 2)).unwrap().data());
    }
    assert_eq!(fv.values, manual);
    assert_eq!(fv.values.len(), bank.feature_len());
}

// Planar layout: filter-major, then slice-major.
#[test]
fn planar_stacking_matches_manual_composition() {
    let mut rng = Rng::new(5);
    let ae = SparseAutoencoder::init(9, 3, 1.0, 2).unwrap();
    let scan = random_tensor(&mut rng, (4, 8, 7));
    let bank = ConvFeatureBank::from_autoencoder_2d(&ae, (3, 3), (2, 2), scan.shape()).unwrap();
    let fv = bank.featurize(&scan).unwrap();

    let mut manual = Vec::new();
    for (w, b) in ae.extract_bases_2d((3, 3)).unwrap() {
        for s in 0..4 {
            let conv = convolve2d_valid(&scan.slice(s).unwrap(), &w).unwrap();
            let fm = Matrix::from_fn(conv.rows(), conv.cols(), |i, j| sigmoid(conv.get(i, j) + b)).unwrap();
            manual.extend_from_slice(maxpool2d(&fm, (2, 2)).unwrap().data());
        }
    }
    assert_eq!(fv.values, manual);
}

fn f32_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), len).prop_map(|v| v.into_iter().map(f64::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn volume_bytes_round_trip(d in 1usize..5, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let t = Tensor3::from_fn((d, h, w), |_, _, _| rng.normal() as f32 as f64).unwrap();
        let bytes = encode_volume(&t);
        prop_assert_eq!(decode_volume(&bytes).unwrap(), t);
        for cut in 0..bytes.len() {
            prop_assert!(decode_volume(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn checkpoints_round_trip(n in 1usize..6, p in 1usize..6, k in 2usize..4, seed in any::<u64>()) {
        let ae = SparseAutoencoder::init(n, p, 1.0, seed).unwrap();
        let bytes = ae.to_bytes();
        prop_assert_eq!(&SparseAutoencoder::from_bytes(&bytes).unwrap(), &ae);
        prop_assert!(SparseAutoencoder::from_bytes(&bytes[..bytes.len() - 1]).is_err());

        let mut rng = Rng::new(seed);
        let net = MlpClassifier::new(
            Matrix::from_fn(p, n, |_, _| rng.normal()).unwrap(),
            (0..p).map(|_| rng.normal()).collect(),
            Matrix::from_fn(k, p, |_, _| rng.normal()).unwrap(),
            (0..k).map(|_| rng.normal()).collect(),
        ).unwrap();
        let bytes = net.to_bytes();
        prop_assert_eq!(&MlpClassifier::from_bytes(&bytes).unwrap(), &net);
        let mut extra = bytes.clone();
        extra.push(0);
        prop_assert!(MlpClassifier::from_bytes(&extra).is_err());
    }

    #[test]
    fn feature_and_patch_files_round_trip(values in f32_values(24), len in prop::sample::select(vec![1usize, 2, 3, 4, 6, 8, 12])) {
        let fv = FeatureVector { values: values.clone() };
        prop_assert_eq!(FeatureVector::from_bytes(&fv.to_bytes()).unwrap(), fv);

        let patches: Vec<Vec<f64>> = values.chunks(len).map(<[f64]>::to_vec).collect();
        let bytes = encode_patch_cache(len, &patches).unwrap();
        let (back_len, back) = decode_patch_cache(&bytes).unwrap();
        prop_assert_eq!(back_len, len);
        prop_assert_eq!(back, patches);
    }
}
