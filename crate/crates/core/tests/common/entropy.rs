pub fn brute_entropy(votes: &[u8]) -> f64 {
    let n = votes.len() as f64;
    let mut h = 0.0;
    for l in 0..=u8::MAX {
        let c = votes.iter().filter(|&&v| v == l).count();
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}
