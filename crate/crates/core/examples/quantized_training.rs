//! Local training on synthetic blobs, then ternary and binary quantization.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use mudpqfed::quantfl::{
    dequantize, evaluate, local_train, quantize, Codebook, DenseModel, SyntheticBlobs, TrainConfig,
};

fn main() -> mudpqfed::Result<()> {
    let (train, test) = SyntheticBlobs::default().generate(1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let model = DenseModel::mlp(&[train.dim, 16, train.classes], &mut rng)?;
    println!(
        "{} parameters, initial accuracy {:.3}",
        model.parameter_count(),
        evaluate(&model, &test)?
    );
    let cfg = TrainConfig {
        epochs: 5,
        lr: 0.2,
        batch_size: 8,
    };
    let trained = local_train(&model, &train, &cfg, &mut rng)?;
    println!("full precision: {:.3}", evaluate(&trained, &test)?);
    for codebook in [Codebook::Ternary, Codebook::Binary] {
        let q = quantize(&trained, codebook);
        let codes = q.codes();
        let histogram: Vec<(i64, usize)> = codebook
            .codes()
            .iter()
            .map(|&c| (c, codes.iter().filter(|&&x| x == c).count()))
            .collect();
        let restored = dequantize(&q, &trained)?;
        println!(
            "{}: scales {:?}, codes {histogram:?}, accuracy {:.3}",
            codebook.name(),
            q.scales(),
            evaluate(&restored, &test)?
        );
    }
    Ok(())
}
