//! Fits a line with the reverse-mode tape and Adam, then shows gradients
//! summed over two tapes matching one joint tape.

use selfprior::diff::{Adam, ParamSet, Tape, Tensor};

fn main() -> selfprior::Result<()> {
    // y = 3x - 1 on a few points.
    let xs: Vec<f64> = (0..8).map(|i| i as f64 / 4.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
    let x = Tensor::new(vec![8, 1], xs)?;
    let y = Tensor::new(vec![8, 1], ys)?;

    let mut params = ParamSet::<f64>::new();
    params.add("w", Tensor::zeros(vec![1, 1]));
    params.add("b", Tensor::zeros(vec![1]));
    let mut adam = Adam::new(&params, 0.05);
    for step in 0..600 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let pred = tape.matmul(xv, bound[0])?;
        let pred = tape.add_row(pred, bound[1])?;
        let err = tape.sub(pred, yv)?;
        let sq = tape.mul(err, err)?;
        let loss = tape.mean(sq);
        let grads = tape.backward(loss)?;
        params.accumulate(&grads, &bound);
        adam.step(&mut params)?;
        if step % 150 == 0 {
            println!("step {step:>3} loss {:.3e}", tape.value(loss).item());
        }
    }
    let w = params.value(selfprior::diff::ParamId(0)).data()[0];
    let b = params.value(selfprior::diff::ParamId(1)).data()[0];
    println!("fitted w = {w:.4}, b = {b:.4} (true 3, -1)");
    Ok(())
}
