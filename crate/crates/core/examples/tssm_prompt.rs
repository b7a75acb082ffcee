//! Builds the "A photo of {title}" prompt with the mock tokenizer and
//! embedder, then shows the text self-similarity fusion.

use zsol::tssm::{build_prompt, tssm_fuse, MockEmbedder, MockTokenizer};

fn main() -> zsol::Result<()> {
    let title = std::env::args().nth(1).unwrap_or_else(|| "women and kids".to_string());
    println!("prompt: {}", build_prompt(&title)?);

    let text = MockEmbedder::new(64, 0).bundle(&MockTokenizer, &title)?;
    let span = text.tokens.title_span();
    println!(
        "title tokens at {}..{}: {:?}",
        span.start,
        span.start + span.len,
        &text.tokens.ids()[span.start..span.start + span.len]
    );
    println!("W = cos(sentence, title) = {:.6}", text.weight);

    // The two closed-form cases: orthogonal inputs pass the title through,
    // identical inputs double it.
    let (w, fused) = tssm_fuse(&[0.0, 2.0], &[1.0, 0.0])?;
    println!("orthogonal: W = {w}, fused = {fused:?}");
    let (w, fused) = tssm_fuse(&[0.5, -1.5], &[0.5, -1.5])?;
    println!("identical:  W = {w}, fused = {fused:?}");
    Ok(())
}
