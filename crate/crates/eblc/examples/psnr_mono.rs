//! Scratch: PSNR and payload-size monotonicity of the built-in codec on
//! wide-range textured frames.

use eblc::codec::{crf_to_psnr, BuiltinCodec, CompressionProfile, Crf, VideoCodec};
use eblc::detect::synthetic::textured_frame;

fn main() {
    let corpus: Vec<_> = (0..6)
        .map(|i| textured_frame(900 + i, 96, 96, 128.0, 80.0))
        .collect();
    let mut last_psnr = f64::INFINITY;
    let mut last_size = usize::MAX;
    let mut mono_psnr = true;
    let mut mono_size = true;
    for crf in (0..=50).step_by(5) {
        let crf = Crf::new(crf).unwrap();
        let psnr = crf_to_psnr(&corpus, &BuiltinCodec, crf).unwrap();
        let seg = BuiltinCodec
            .encode(&corpus, &CompressionProfile::builtin(crf))
            .unwrap();
        let size = seg.payload.len();
        println!(
            "crf {:>2}  psnr {:>8.3}  size {:>8}  {}{}",
            crf,
            psnr.min(999.0),
            size,
            if psnr > last_psnr { "PSNR-UP! " } else { "" },
            if size > last_size { "SIZE-UP!" } else { "" },
        );
        if psnr > last_psnr {
            mono_psnr = false;
        }
        if size > last_size {
            mono_size = false;
        }
        last_psnr = psnr;
        last_size = size;
    }
    println!("monotone psnr: {mono_psnr}, monotone size: {mono_size}");
}
