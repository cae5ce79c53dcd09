use std::collections::HashSet;

use proptest::prelude::*;

use ontolink::candgen::{CandgenConfig, CandidateGenerator, MatchOrder};
use ontolink::eval::{
    document_level_prf, mention_level_prf, raw_corpus_lower_bound, GoldMention, Prediction,
};
use ontolink::io::{read_jsonl, write_jsonl};
use ontolink::kb::{AliasEntry, AliasTable, NameType, SemanticType};
use ontolink::linker::linker_loss;
use ontolink::preprocess::{
    emit_iob2, parse_iob2, read_pubtator, resolve_overlapping_mentions, write_pubtator, Document,
    Mention, RawDocument, RawMention, Tokenizer,
};
use ontolink::selector::{infer_greedy, infer_threshold, selector_loss};

const WORDS: &[&str] = &[
    "heart", "attack", "renal", "failure", "acute", "kidney", "cell", "protein", "lung", "cancer",
    "type", "2", "IL-2", "alpha", "beta", "MI",
];

fn word() -> impl Strategy<Value = &'static str> {
    proptest::sample::select(WORDS)
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

fn name_type() -> impl Strategy<Value = NameType> {
    prop_oneof![
        Just(NameType::PrimaryName),
        Just(NameType::PrimaryNameDisambiguated),
        Just(NameType::Acronym),
        Just(NameType::Synonym),
    ]
}

fn alias_table() -> impl Strategy<Value = AliasTable> {
    prop::collection::vec((phrase(), 0..12usize, name_type()), 1..40).prop_map(|rows| {
        let mut seen = HashSet::new();
        let mut with_primary = HashSet::new();
        let entries = rows
            .into_iter()
            .filter(|(n, e, _)| seen.insert((n.clone(), *e)))
            .map(|(name, e, nt)| {
                // exactly one primary name per entity, on its first alias
                let nt = match (with_primary.insert(e), nt.is_primary()) {
                    (true, true) | (false, false) => nt,
                    (true, false) => NameType::PrimaryName,
                    (false, true) => NameType::Synonym,
                };
                (name, e, nt)
            })
            .map(|(name, e, nt)| AliasEntry {
                name,
                entity_id: format!("C{e}"),
                semantic_type: SemanticType {
                    id: "T1".into(),
                    name: "Thing".into(),
                },
                name_type: nt,
                qualifier: None,
            })
            .collect();
        AliasTable::from_entries(entries).unwrap()
    })
}

fn prediction(
    doc: usize,
    sentence: usize,
    start: usize,
    len: usize,
    entity: usize,
    score: f64,
) -> Prediction {
    Prediction {
        doc_id: format!("d{doc}"),
        sentence,
        start,
        end: start + len,
        text: String::new(),
        entity_id: format!("C{entity}"),
        type_id: "T1".into(),
        name_type: NameType::PrimaryName,
        alias: String::new(),
        score,
        p: 0.5,
    }
}

fn predictions() -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec(
        (
            0..3usize,
            0..2usize,
            0..15usize,
            1..5usize,
            0..6usize,
            -3.0..3.0f64,
        ),
        0..30,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(d, s, st, l, e, x)| prediction(d, s, st, l, e, x))
            .collect()
    })
}

fn to_gold(p: &Prediction) -> GoldMention {
    GoldMention {
        doc_id: p.doc_id.clone(),
        sentence: p.sentence,
        start: p.start,
        end: p.end,
        entity_id: p.entity_id.clone(),
        type_id: p.type_id.clone(),
    }
}

fn keys(p: &[Prediction]) -> HashSet<(String, usize, usize, usize, String)> {
    p.iter()
        .map(|p| {
            (
                p.doc_id.clone(),
                p.sentence,
                p.start,
                p.end,
                p.entity_id.clone(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indexed_retrieval_equals_brute_force(table in alias_table(), query in phrase(), score_first in any::<bool>(), k in 1..20usize) {
        let order = if score_first { MatchOrder::ScoreFirst } else { MatchOrder::NameTypeFirst };
        let gen = CandidateGenerator::build(table, CandgenConfig { order, ..CandgenConfig::default() }).unwrap();
        let a = gen.generate_k(&query, k);
        let b = gen.generate_brute_force(&query, k);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.entity_id, &y.entity_id);
            prop_assert!((x.score - y.score).abs() <= 1e-9);
        }
        let entities: HashSet<&str> = a.iter().map(|m| m.entity_id.as_str()).collect();
        prop_assert_eq!(entities.len(), a.len());
        prop_assert!(a.len() <= k);
        prop_assert!(a.iter().all(|m| m.score > 0.0 && m.score <= 1.0 + 1e-9));
    }

    #[test]
    fn greedy_is_an_overlap_free_subset(scored in predictions(), tau in -2.0..2.0f64, bump in 0.0..2.0f64) {
        let thr = infer_threshold(&scored, tau);
        let greedy = infer_greedy(&scored, tau);
        prop_assert!(keys(&greedy).is_subset(&keys(&thr)));
        prop_assert!(greedy.iter().all(|p| p.score > tau));
        for (i, a) in greedy.iter().enumerate() {
            for b in &greedy[i + 1..] {
                prop_assert!(!(a.doc_id == b.doc_id && a.sentence == b.sentence && a.start < b.end && b.start < a.end));
            }
        }
        prop_assert!(keys(&infer_threshold(&scored, tau + bump)).is_subset(&keys(&thr)));
        let gold: Vec<GoldMention> = scored.iter().step_by(2).map(to_gold).collect();
        prop_assert!(mention_level_prf(&gold, &greedy).report.recall <= mention_level_prf(&gold, &thr).report.recall);
    }

    #[test]
    fn metric_algebra(pred in predictions(), gold_src in predictions(), dropped in 0..10usize) {
        let gold: Vec<GoldMention> = gold_src.iter().map(to_gold).collect();
        let m = mention_level_prf(&gold, &pred).report;
        prop_assert_eq!(m.tp + m.fp, keys(&pred).len());
        prop_assert!(m.tp <= gold.len());
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert!(m.f1 + 1e-12 >= m.precision.min(m.recall) || m.tp == 0);

        let perfect: Vec<GoldMention> = pred.iter().map(to_gold).collect();
        if !pred.is_empty() {
            let p = mention_level_prf(&perfect, &pred).report;
            prop_assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
            let d = document_level_prf(&perfect, &pred);
            prop_assert_eq!(d.f1, 1.0);
        }

        let lb = raw_corpus_lower_bound(&gold, &pred, dropped);
        prop_assert_eq!(lb.fn_, m.fn_ + dropped);
        prop_assert!(lb.recall <= m.recall + 1e-12);
        prop_assert!(lb.f1 <= m.f1 + 1e-12);
    }

    #[test]
    fn losses_are_nonnegative(logits in prop::collection::vec(-20.0..20.0f64, 1..12), pick in any::<prop::sample::Index>(), s in -5.0..5.0f64, w in 1.0..20.0f64) {
        let gold = pick.index(logits.len());
        let (l, g) = linker_loss(&logits, gold);
        prop_assert!(l >= -1e-12);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(g[gold] <= 0.0);
        let uniform = vec![s; logits.len()];
        prop_assert!((linker_loss(&uniform, gold).0 - (logits.len() as f64).ln()).abs() < 1e-9);

        let (pos, dpos) = selector_loss(s, true, 1.0, w);
        let (neg, dneg) = selector_loss(s, false, 1.0, w);
        prop_assert!(pos >= 0.0 && neg >= 0.0);
        prop_assert_eq!(pos == 0.0, s >= 1.0);
        prop_assert_eq!(neg == 0.0, s <= -1.0);
        prop_assert!(dpos <= 0.0 && dneg >= 0.0);
    }

    #[test]
    fn overlap_resolution_leaves_disjoint_mentions(raw in prop::collection::vec((0..2usize, 0..12usize, 1..5usize, 0..4usize), 0..20)) {
        let mentions: Vec<Mention> = raw
            .iter()
            .map(|&(s, st, l, e)| Mention {
                sentence: s,
                start: st,
                end: st + l,
                entity_id: format!("C{e}"),
                semantic_type: "T".into(),
            })
            .collect();
        let unique: HashSet<&Mention> = mentions.iter().collect();
        let (kept, dropped) = resolve_overlapping_mentions(mentions.clone());
        prop_assert_eq!(kept.len() + dropped, mentions.len());
        prop_assert!(kept.len() <= unique.len());
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(!a.overlaps(b));
            }
        }
        // every dropped mention overlaps something kept
        for m in &mentions {
            prop_assert!(kept.iter().any(|k| k.overlaps(m)));
        }
    }

    #[test]
    fn iob2_roundtrip(words in prop::collection::vec(word(), 1..25), spans in prop::collection::vec((0..25usize, 1..4usize), 0..6)) {
        let mut doc = Document::from_text("d", words.join(" ") + ".", &Tokenizer::default());
        let n = doc.sentences[0].len();
        let mentions: Vec<Mention> = spans
            .into_iter()
            .filter(|&(s, l)| s + l <= n)
            .map(|(s, l)| Mention { sentence: 0, start: s, end: s + l, entity_id: "C1".into(), semantic_type: "T047".into() })
            .collect();
        doc.mentions = resolve_overlapping_mentions(mentions).0;
        let parsed = parse_iob2(&emit_iob2(&doc).unwrap()).unwrap();
        let tokens: Vec<Vec<String>> = doc.sentences.iter().map(|s| s.iter().map(|t| t.text.clone()).collect()).collect();
        prop_assert_eq!(parsed.sentences, tokens);
        let spans = |m: &[Mention]| m.iter().map(|m| (m.sentence, m.start, m.end, m.semantic_type.clone())).collect::<Vec<_>>();
        prop_assert_eq!(spans(&parsed.mentions), spans(&doc.mentions));
    }

    #[test]
    fn pubtator_and_jsonl_roundtrip(title in phrase(), body in prop::collection::vec(phrase(), 1..4), picks in prop::collection::vec((any::<prop::sample::Index>(), 0..5usize), 0..4)) {
        let body = body.join(". ");
        let text = format!("{title} {body}");
        let starts: Vec<usize> = std::iter::once(0).chain(text.match_indices(' ').map(|(i, _)| i + 1)).collect();
        let mut mentions: Vec<RawMention> = picks
            .iter()
            .map(|(i, e)| {
                let start = starts[i.index(starts.len())];
                let end = text[start..].find(' ').map_or(text.len(), |j| start + j);
                RawMention { start, end, text: text[start..end].to_string(), semantic_type: "T1".into(), entity_id: format!("C{e}") }
            })
            .collect();
        mentions.sort_by(|a, b| (a.start, &a.entity_id).cmp(&(b.start, &b.entity_id)));
        let doc = RawDocument { doc_id: "123".into(), title, body, mentions };
        let mut buf = Vec::new();
        write_pubtator(&mut buf, std::slice::from_ref(&doc)).unwrap();
        let back = read_pubtator(&buf[..]).unwrap();
        prop_assert_eq!(&back, &vec![doc.clone()]);

        let mut out = Vec::new();
        write_jsonl(&mut out, std::slice::from_ref(&doc)).unwrap();
        let again: Vec<RawDocument> = read_jsonl(&out[..]).unwrap();
        prop_assert_eq!(again, vec![doc]);
    }
}
