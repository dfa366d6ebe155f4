fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let dir = std::env::args().nth(2).unwrap_or_else(|| "/tmp/corpus".into());
    let spec = mpc_speech::synth::SynthSpec { num_utterances: n, ..Default::default() };
    let manifest = mpc_speech::synth::write_corpus(&dir, &spec, true).unwrap();
    println!("{}", manifest.display());
}
