//! Loads an IDX image/label pair (the MNIST file layout).
//!
//! With two paths it reads those files; otherwise it builds a tiny pair in
//! memory.
//!
//! ```text
//! cargo run --example load_idx -- train-images-idx3-ubyte train-labels-idx1-ubyte
//! ```

use fedstpa::data::{decode_idx, load_idx};

fn tiny_pair() -> (Vec<u8>, Vec<u8>) {
    let (n, rows, cols) = (3u32, 2u32, 2u32);
    let mut images = Vec::new();
    for v in [0x803u32, n, rows, cols] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&[0, 255, 128, 64, 255, 255, 0, 0, 10, 20, 30, 40]);
    let mut labels = Vec::new();
    for v in [0x801u32, n] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend_from_slice(&[7, 1, 3]);
    (images, labels)
}

fn main() -> fedstpa::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ds = match args.as_slice() {
        [images, labels] => load_idx(images, labels)?,
        _ => {
            let (images, labels) = tiny_pair();
            decode_idx(&images, &labels)?
        }
    };
    println!("{} rows, {} features, {} classes", ds.len(), ds.n_features(), ds.n_classes());
    for (i, (x, y)) in ds.rows().take(3).enumerate() {
        println!("row {i}: label {y}, first pixels {:?}", &x[..x.len().min(4)]);
    }
    Ok(())
}
