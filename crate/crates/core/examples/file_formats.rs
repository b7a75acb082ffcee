//! Writes each binary artifact type, reads it back and shows its header.

use zsol::align::ProjectionModel;
use zsol::format::{encode_checkpoint, encode_points, encode_tensor, encode_tokens, decode_points, Tensor};
use zsol::grid::{Point, PointSet};
use zsol::tssm::{tokenize_prompt, MockTokenizer};

fn header(name: &str, bytes: &[u8]) {
    let shown: Vec<String> = bytes.iter().take(12).map(|b| format!("{b:02x}")).collect();
    println!("{name:<10} {:>5} bytes  {}", bytes.len(), shown.join(" "));
}

fn main() -> zsol::Result<()> {
    let tensor = Tensor::new(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])?;
    header("tensor", &encode_tensor(&tensor)?);

    let points = PointSet::with_confidences(vec![Point::new(1.5, 2.5), Point::new(3.0, 4.0)], vec![0.9, 0.4])?;
    let bytes = encode_points(&points)?;
    header("points", &bytes);
    assert_eq!(decode_points(&bytes)?, points);

    let tokens = tokenize_prompt(&MockTokenizer, "red cars")?;
    header("tokens", &encode_tokens(&tokens)?);

    header("checkpoint", &encode_checkpoint(&ProjectionModel::identity(4)?)?);
    Ok(())
}
