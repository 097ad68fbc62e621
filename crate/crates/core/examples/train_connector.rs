//! Trains the two-layer connector on synthetic pairs, then prints the loss curve.

use medvl::connector::{mlp_backward, train_stage, FreezeMask, MlpParams, Stage, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Array2::from_shape_fn((200, 8), |_| rng.random_range(-1.0..1.0));
    let a = Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0));
    let y = x.dot(&a);

    let init = MlpParams::init(8, 64, 8, 1);
    let mut cfg = TrainConfig::pretrain();
    cfg.global_batch = 8;
    cfg.epochs = 40;

    let (before, _) = mlp_backward(&x, &y, &init)?;
    let out = train_stage(&x, &y, &cfg, &FreezeMask::for_stage(Stage::ConnectorPretrain), &init)?;
    let (after, _) = mlp_backward(&x, &y, &out.params)?;

    for row in out.trace.iter().step_by(100) {
        println!("step {:>4}  lr {:.2e}  batch loss {:.5}", row.step, row.lr, row.loss);
    }
    println!("loss {before:.4} -> {after:.5} in {} steps", out.steps());

    let dir = tempfile::tempdir()?;
    let manifest = medvl::connector::save_checkpoint(dir.path(), &out.params, cfg.seed, cfg.stage, out.steps())?;
    println!("checkpoint shapes {:?}", manifest.shapes);
    Ok(())
}
