use coap_latent::coap_wire::{decode_message, encode_message, CoapMessage, CoapOption, Code, MessageType};
use coap_latent::eval::{compute_metrics, ClassMetrics};
use coap_latent::trees::compute_class_weights;
use proptest::prelude::*;

type Score = fn(&ClassMetrics) -> f64;

fn message() -> impl Strategy<Value = CoapMessage> {
    let options = prop::collection::vec((0u16..2000, prop::collection::vec(any::<u8>(), 0..300)), 0..6);
    (
        0u8..4,
        0u8..8,
        0u8..32,
        any::<u16>(),
        prop::collection::vec(any::<u8>(), 0..=8),
        options,
        prop::collection::vec(any::<u8>(), 0..64),
    )
        .prop_map(|(t, class, detail, mid, token, options, payload)| {
            let msg_type = [
                MessageType::Confirmable,
                MessageType::NonConfirmable,
                MessageType::Acknowledgement,
                MessageType::Reset,
            ][t as usize];
            let mut msg = CoapMessage::new(msg_type, Code::new(class, detail), mid)
                .with_token(token)
                .with_payload(payload);
            for (number, value) in options {
                msg.add_option(CoapOption::new(number, value));
            }
            msg
        })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(msg in message()) {
        let bytes = encode_message(&msg).unwrap();
        prop_assert_eq!(decode_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn decodable_bytes_reencode_identically(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        if let Ok(msg) = decode_message(&bytes) {
            prop_assert_eq!(encode_message(&msg).unwrap(), bytes);
        }
    }

    #[test]
    fn weighted_scores_within_class_range(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = compute_metrics(&truth, &pred, 4).unwrap();
        let present: Vec<_> = m.per_class.iter().filter(|c| c.support > 0).collect();
        let scores: [(Score, f64); 3] =
            [(|c| c.precision, m.precision), (|c| c.recall, m.recall), (|c| c.f1, m.f1)];
        for (get, avg) in scores {
            let lo = present.iter().map(|c| get(c)).fold(f64::INFINITY, f64::min);
            let hi = present.iter().map(|c| get(c)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg >= lo - 1e-12 && avg <= hi + 1e-12);
        }
    }

    #[test]
    fn balanced_weights_equalize_class_mass(counts in prop::collection::vec(1usize..500, 2..6)) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let w = compute_class_weights(&labels).unwrap();
        let n = labels.len() as f64;
        for (c, &count) in counts.iter().enumerate() {
            prop_assert!((w.get(c) * count as f64 - n / counts.len() as f64).abs() < 1e-9);
        }
    }
}
