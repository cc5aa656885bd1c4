use benchsynth::corpus::toy::{random_kernel, ToyConfig};
use benchsynth::corpus::{make_masked_instance, rewrite_identifiers, CorpusEntry, DEFAULT_MAX_HOLE_FRACTION};
use benchsynth::features::{distance, extract_all, FeatureSpace, FeatureVector};
use benchsynth::ir::{lower_to_ir, run_dce};
use benchsynth::kcl::{check_kernel, compile, parse_kernel, parse_kernel_bytes, render_source};
use benchsynth::tokenizer::{Vocabulary, END, START};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernel(seed: u64) -> benchsynth::kcl::KernelAst {
    let cfg = ToyConfig {
        max_stmts: 6,
        max_block_stmts: 3,
        max_nesting: 3,
        max_expr_depth: 3,
    };
    random_kernel(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)
}

const SOUP: [&str; 32] = [
    "kernel", "void", "k", "(", ")", "{", "}", "[", "]", "global", "local", "int", "float", "bool",
    "*", "a", "i", "=", ";", "if", "else", "for", "<", "+", "-", "1", "2.0", "get_global_id",
    "barrier", "atomic_add", "&", ",",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parser_total_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..160)) {
        let _ = parse_kernel_bytes(&bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn parser_total_on_token_soup(toks in prop::collection::vec(0..SOUP.len(), 0..80)) {
        let src: Vec<&str> = toks.iter().map(|&t| SOUP[t]).collect();
        if let Ok(ast) = parse_kernel(&src.join(" ")) {
            let _ = check_kernel(&ast);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn render_round_trips(seed in any::<u64>()) {
        let ast = kernel(seed);
        let text = render_source(&ast);
        let again = parse_kernel(&text).unwrap();
        prop_assert_eq!(&again, &ast);
        prop_assert_eq!(render_source(&again), text);
        prop_assert!(check_kernel(&again).is_ok());
    }

    #[test]
    fn checked_kernels_lower_validly(seed in any::<u64>()) {
        let ast = kernel(seed);
        let raw = lower_to_ir(&ast);
        prop_assert!(raw.validate().is_ok());
        let once = run_dce(&raw);
        prop_assert!(once.validate().is_ok());
        prop_assert_eq!(run_dce(&once), once.clone());
        prop_assert!(once.instruction_count() <= raw.instruction_count());
        let effects = |f: &benchsynth::ir::IrFunction| f.instructions().filter(|i| i.op.has_side_effects()).count();
        // unreachable blocks aside, nothing with an effect disappears
        if raw.reachable().len() == raw.blocks.len() {
            prop_assert_eq!(effects(&raw), effects(&once));
        }
    }

    #[test]
    fn rewrite_keeps_features(seed in any::<u64>(), rseed in any::<u64>()) {
        let ast = kernel(seed);
        let renamed = rewrite_identifiers(&ast, &mut ChaCha8Rng::seed_from_u64(rseed));
        prop_assert!(check_kernel(&renamed).is_ok());
        prop_assert_eq!(extract_all(&renamed), extract_all(&ast));
    }

    #[test]
    fn reconstruction_law(seed in any::<u64>()) {
        let vocab = Vocabulary::base();
        let mut e = CorpusEntry::from_ast(&kernel(seed));
        e.token_ids = vec![START];
        e.token_ids.extend(vocab.encode(&e.source).unwrap());
        e.token_ids.push(END);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let n = e.content().len();
        for _ in 0..20 {
            let m = make_masked_instance(&e, &mut rng, None, DEFAULT_MAX_HOLE_FRACTION).unwrap();
            prop_assert_eq!(m.reconstruct(), content_framed(&e));
            prop_assert!(m.hidden_length <= (0.9 * n as f64).floor() as usize);
        }
    }

    #[test]
    fn distance_is_a_metric(
        a in prop::collection::vec(0.0..50.0f64, 8),
        b in prop::collection::vec(0.0..50.0f64, 8),
        c in prop::collection::vec(0.0..50.0f64, 8),
    ) {
        let v = |x: Vec<f64>| FeatureVector::new(FeatureSpace::Syntax8, x).unwrap();
        let (a, b, c) = (v(a), v(b), v(c));
        let d = |x: &FeatureVector, y: &FeatureVector| distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }
}

fn content_framed(e: &CorpusEntry) -> Vec<u32> {
    let mut v = vec![START];
    v.extend_from_slice(e.content());
    v.push(END);
    v
}

#[test]
fn compile_accepts_rendered_corpus_kernels() {
    for seed in 0..50 {
        let text = render_source(&kernel(seed));
        assert!(compile(&text).is_ok(), "{text}");
    }
}
