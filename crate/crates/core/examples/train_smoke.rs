use mra_core::envs::{make_game_set, EnvKind};
use mra_core::train::{Trainer, TrainConfig};

fn run(tag: &str, config: TrainConfig) {
    let episodes = config.episodes;
    let set = make_game_set(EnvKind::Treasure, &[vec![2]], 20, 2).unwrap();
    let mut trainer = Trainer::new(set, config, None).unwrap();
    trainer.run().unwrap();
    let windows: Vec<f64> = (0..episodes / 250)
        .map(|w| {
            let lo = w * 250;
            trainer.records[lo..lo + 250].iter().map(|r| r.role_returns[0]).sum::<f64>() / 250.0
        })
        .collect();
    println!("{tag}: {:?}", windows.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>());
}

fn main() {
    let base = TrainConfig {
        episodes: 2000, rollouts: 12, batch_size: 128, inner_steps: 10,
        min_steps_per_update: 50, latent_dim: 4, embed_dim: 32, hidden_dim: 32,
        marginal_samples: 4, beta: 3e-3, seed: 1, ..Default::default()
    };
    run("tau 0.05", TrainConfig { tau: 0.05, ..base.clone() });
    run("tau 0.01", base.clone());
    run("tau 0.05 B256", TrainConfig { tau: 0.05, batch_size: 256, ..base.clone() });
}
