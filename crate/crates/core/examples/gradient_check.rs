//! Finite-difference check of the model's analytic gradients.
//!
//! cargo run --example gradient_check

use feddmf::model::{DmfModel, Fusion, ModelShape};
use feddmf::nn::{mse_loss, Matrix, ParamSet, Rng};

fn loss(model: &DmfModel, users: &[usize], features: &[usize], labels: &Matrix) -> f64 {
    let mut rng = Rng::new(9);
    let (pred, _) = model.forward(users, features, true, &mut rng).unwrap();
    mse_loss(&pred, labels).unwrap().0
}

fn main() {
    let users = [0, 1, 2, 3, 1];
    let features = [4, 0, 2, 2, 3];
    let labels = Matrix::column(&[1.0, 0.0, 1.0, 0.0, 0.0]);
    let h = 1e-6;

    for fusion in [Fusion::Concat, Fusion::Product] {
        let shape = ModelShape { embed_dim: 4, hidden_dim: 3, dropout_rate: 0.5, fusion };
        let mut rng = Rng::new(1);
        let mut model = DmfModel::new(4, 5, &shape, &mut rng).unwrap();
        for slot in model.slots() {
            slot.value.iter_mut().for_each(|v| *v = rng.uniform_in(-1.0, 1.0));
        }

        // same dropout seed as `loss`, so the mask matches
        let mut drop = Rng::new(9);
        let (pred, mut cache) = model.forward(&users, &features, true, &mut drop).unwrap();
        let (_, grad) = mse_loss(&pred, &labels).unwrap();
        model.backward(&mut cache, &grad).unwrap();
        let analytic: Vec<(&str, Vec<f64>)> = model.slots().iter().map(|s| (s.name, s.grad.to_vec())).collect();
        model.zero_grads();

        println!("{fusion:?} fusion");
        for (t, (name, grads)) in analytic.iter().enumerate() {
            let mut worst: f64 = 0.0;
            for (i, g) in grads.iter().enumerate() {
                let orig = model.slots()[t].value[i];
                model.slots()[t].value[i] = orig + h;
                let up = loss(&model, &users, &features, &labels);
                model.slots()[t].value[i] = orig - h;
                let down = loss(&model, &users, &features, &labels);
                model.slots()[t].value[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
            }
            println!("  {name:<20} max rel err {worst:.2e}");
        }
    }
}
