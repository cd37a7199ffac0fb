fn main() {
    let n: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(160);
    let dims = [n, n, n];
    let mut fft = tfus::fft::Fft3::<f32>::new(dims);
    let input: Vec<f32> = (0..n * n * n).map(|i| (i % 17) as f32).collect();
    let mut spec = fft.new_spectrum();
    let mut out = vec![0.0; input.len()];
    let t = std::time::Instant::now();
    for _ in 0..5 {
        fft.forward(&input, &mut spec);
        fft.inverse(&mut spec, &mut out);
    }
    println!("{n}^3: {:.1} ms per transform", t.elapsed().as_secs_f64() * 1e3 / 10.0);
}
