use leaklab_core::features::{tokenize, MAX_TOKENS, VOCAB_SIZE};
use leaklab_core::rng::rng_from;
use leaklab_core::trace::{parse_trace, random_trace, trace_stats, write_trace, Channel, ChannelSet, Gpn};
use proptest::prelude::*;

proptest! {
    #[test]
    fn write_then_parse_is_identity(seed: u64, bits in 1u8..16, windows: bool) {
        let mut channels = ChannelSet::of(&[Channel::Page]);
        for (i, c) in Channel::ALL.into_iter().enumerate() {
            if bits >> i & 1 == 1 {
                channels.insert(c);
            }
        }
        let t = random_trace(&mut rng_from(seed), 300, channels, windows);
        let text = write_trace(&t);
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(write_trace(&back), text);
    }

    #[test]
    fn stats_and_tokens_ignore_page_numbering(seed: u64, offset in 1u64..1 << 20) {
        let t = random_trace(&mut rng_from(seed), 300, ChannelSet::ALL, true);
        let moved = t.map_pages(|g| Gpn(g.0 ^ offset)).unwrap();
        prop_assert_eq!(trace_stats(&t), trace_stats(&moved));
        let tok = tokenize(&t);
        prop_assert!(tok.len() <= MAX_TOKENS);
        prop_assert!(tok.iter().all(|&x| x < VOCAB_SIZE));
        prop_assert_eq!(tok, tokenize(&moved));
    }
}
