use proptest::prelude::*;

use mclt::codec::{encode, neighbors_of, DecoderState, EncodedPacket, SourceBlock, HEADER_LEN};
use mclt::distributions::{ideal_soliton, DegreeDistribution};
use mclt::rng::{derive_seed, SplitMix64};

fn block(k: usize, symbol_size: usize, seed: u64) -> SourceBlock {
    let mut rng = SplitMix64::new(seed);
    let data = (0..k * symbol_size).map(|_| rng.next_u64() as u8).collect();
    SourceBlock::new(k, symbol_size, data).unwrap()
}

fn packets_until_complete(block: &SourceBlock, dist: &DegreeDistribution, seed: u64) -> Vec<EncodedPacket> {
    let mut state = DecoderState::new(block.k(), block.symbol_size());
    let mut out = Vec::new();
    for i in 0.. {
        let p = encode(block, dist, 0, derive_seed(seed, i)).unwrap();
        state.ingest_packet(&p, dist).unwrap();
        out.push(p);
        if state.is_complete() {
            break;
        }
    }
    out
}

/// Every buffered symbol's payload equals the XOR of its unrecovered neighbors.
fn assert_buffer_consistent(state: &DecoderState, block: &SourceBlock) {
    for (neighbors, payload) in state.buffered() {
        assert!(neighbors.len() >= 2);
        let mut expect = vec![0u8; block.symbol_size()];
        for &n in neighbors {
            assert!(!state.is_recovered(n as usize));
            for (e, b) in expect.iter_mut().zip(block.symbol(n as usize)) {
                *e ^= b;
            }
        }
        assert_eq!(payload, &expect[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_through_wire(k in 1usize..120, symbol_size in 1usize..40, seed: u64) {
        let b = block(k, symbol_size, seed);
        let dist = ideal_soliton(k).unwrap();
        let mut state = DecoderState::new(k, symbol_size);
        let mut i = 0;
        while !state.is_complete() {
            let p = encode(&b, &dist, 3, derive_seed(seed, i)).unwrap();
            let wire = p.to_bytes();
            prop_assert_eq!(wire.len(), HEADER_LEN + symbol_size + 4);
            let back = EncodedPacket::from_bytes(&wire).unwrap();
            prop_assert_eq!(&back, &p);
            state.ingest_packet(&back, &dist).unwrap();
            i += 1;
        }
        prop_assert_eq!(state.data().unwrap(), b.data());
    }

    #[test]
    fn outcome_ignores_arrival_order(k in 2usize..80, seed: u64, shuffle_seed: u64, drop in 0usize..5) {
        let b = block(k, 4, seed);
        let dist = ideal_soliton(k).unwrap();
        let mut packets = packets_until_complete(&b, &dist, seed);
        // Dropping a few packets leaves a partial decode to compare as well.
        packets.truncate(packets.len().saturating_sub(drop));
        let mut forward = DecoderState::new(k, 4);
        for p in &packets {
            forward.ingest_packet(p, &dist).unwrap();
        }
        SplitMix64::new(shuffle_seed).shuffle(&mut packets);
        let mut shuffled = DecoderState::new(k, 4);
        for p in &packets {
            shuffled.ingest_packet(p, &dist).unwrap();
        }
        prop_assert_eq!(forward.recovered_mask(), shuffled.recovered_mask());
        for i in 0..k {
            prop_assert_eq!(forward.symbol(i), shuffled.symbol(i));
        }
    }

    #[test]
    fn unsolved_never_increases_and_buffer_stays_consistent(k in 1usize..60, seed: u64) {
        let b = block(k, 3, seed);
        let dist = ideal_soliton(k).unwrap();
        let mut state = DecoderState::new(k, 3);
        let mut last = state.unsolved();
        for i in 0..(3 * k as u64 + 20) {
            let p = encode(&b, &dist, 0, derive_seed(seed, i)).unwrap();
            let newly = state.ingest_packet(&p, &dist).unwrap();
            prop_assert_eq!(last - state.unsolved(), newly);
            prop_assert!(state.unsolved() <= last);
            last = state.unsolved();
            assert_buffer_consistent(&state, &b);
            for idx in 0..k {
                if let Some(s) = state.symbol(idx) {
                    prop_assert_eq!(s, b.symbol(idx));
                }
            }
        }
    }

    #[test]
    fn any_bit_flip_is_rejected(seed: u64, byte in 0usize..(HEADER_LEN + 8 + 4), bit in 0u8..8) {
        let b = block(10, 8, seed);
        let p = encode(&b, &ideal_soliton(10).unwrap(), 1, seed).unwrap();
        let mut wire = p.to_bytes();
        wire[byte] ^= 1 << bit;
        prop_assert!(EncodedPacket::from_bytes(&wire).is_err());
    }

    #[test]
    fn neighbors_are_distinct_and_in_range(k in 1usize..500, seed: u64, cfg: u8) {
        let dist = ideal_soliton(k).unwrap();
        let p = EncodedPacket { config_id: cfg, seed, k: k as u32, payload: vec![], neighbors: None };
        let n = neighbors_of(&p, &dist).unwrap();
        prop_assert!(!n.is_empty() && n.len() <= k);
        prop_assert!(n.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(n.iter().all(|&i| (i as usize) < k));
    }
}

#[test]
fn degree_frequencies_follow_distribution() {
    // Chi-square over 10^5 seeds; 9 degrees for k = 9 gives 8 dof.
    let k = 9;
    let dist = ideal_soliton(k).unwrap();
    let n = 100_000;
    let mut counts = vec![0u64; k + 1];
    for s in 0..n {
        let p = EncodedPacket { config_id: 0, seed: s, k: k as u32, payload: vec![], neighbors: None };
        counts[neighbors_of(&p, &dist).unwrap().len()] += 1;
    }
    let chi2: f64 = (1..=k)
        .map(|d| {
            let e = dist.pmf(d) * n as f64;
            (counts[d] as f64 - e).powi(2) / e
        })
        .sum();
    // 0.999 quantile of chi-square with 8 dof.
    assert!(chi2 < 26.12, "chi2 = {chi2}");
}

#[test]
fn file_bytes_roundtrip_with_padding() {
    let text = b"an odd-length message that does not fill the last symbol";
    let b = SourceBlock::from_bytes(text, 7).unwrap();
    assert_eq!(b.symbol_size(), text.len().div_ceil(7));
    let dist = ideal_soliton(7).unwrap();
    let packets = packets_until_complete(&b, &dist, 5);
    let mut state = DecoderState::new(7, b.symbol_size());
    for p in &packets {
        state.ingest_packet(p, &dist).unwrap();
    }
    assert_eq!(&state.data().unwrap()[..text.len()], text);
}
