use std::time::Instant;
fn main() {
    let t = Instant::now();
    let mut acc = 0.0;
    for i in 0..100_000 {
        let v = memecmd_core::mock::mock_embed(&format!("tag/sp{i}"), 256);
        acc += v.as_slice()[0];
    }
    println!("100k embeds dim 256: {:?} (acc {acc})", t.elapsed());
    let t = Instant::now();
    let mut acc2 = 0.0;
    for i in 0..100_000 {
        let v = memecmd_core::mock::mock_embed(&format!("tag/sp{i}"), 256).quantized();
        acc2 += v.as_slice()[0];
    }
    println!("100k embeds+quantize: {:?} (acc {acc2})", t.elapsed());
}
