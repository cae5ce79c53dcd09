use super::*;
use crate::encoder::{grad_check, GradCheckOptions, Vocabulary};
use crate::kb::NameType;
use crate::linker::tests::{document, table, tiny_spec};

fn sample(
    start: usize,
    end: usize,
    entity: &str,
    nt: NameType,
    p: f64,
    label: bool,
) -> SelectorSample {
    let doc = document();
    SelectorSample {
        doc_id: doc.doc_id.clone(),
        sentence: 0,
        start,
        end,
        text: doc.span_text(0, start, end).to_string(),
        candidate: LinkedCandidate {
            entity_id: entity.into(),
            alias: if nt == NameType::Acronym {
                "MI"
            } else {
                "heart attack"
            }
            .into(),
            name_type: nt,
            type_id: "T047".into(),
            score: 0.7,
            p,
        },
        label,
    }
}

fn setup() -> (ScoringModel, Vec<SelectorExample>, Document) {
    let t = table();
    let doc = document();
    let texts: Vec<String> = t
        .entries()
        .iter()
        .map(|e| t.selector_text(&e.entity_id, &e.name).unwrap())
        .chain([doc.text.clone()])
        .collect();
    let vocab = Vocabulary::build(&texts, 1, 1000);
    let model = ScoringModel::new(tiny_spec(Role::Selector), vocab, 11).unwrap();
    let samples = vec![
        sample(4, 6, "C1", NameType::PrimaryName, 0.9, true),
        sample(4, 5, "C3", NameType::PrimaryName, 0.4, false),
        sample(5, 6, "C1", NameType::Acronym, 0.2, false),
        sample(3, 6, "C2", NameType::PrimaryName, 0.6, false),
    ];
    let examples = selector_examples(&model, &t, std::slice::from_ref(&doc), samples).unwrap();
    (model, examples, doc)
}

fn scored(spans: &[(usize, usize, f64)]) -> Vec<Prediction> {
    spans
        .iter()
        .enumerate()
        .map(|(i, &(s, e, score))| Prediction {
            doc_id: "d".into(),
            sentence: 0,
            start: s,
            end: e,
            text: String::new(),
            entity_id: format!("C{i}"),
            type_id: "T".into(),
            name_type: NameType::PrimaryName,
            alias: String::new(),
            score,
            p: 0.5,
        })
        .collect()
}

fn spans(p: &[Prediction]) -> Vec<(usize, usize)> {
    p.iter().map(|p| (p.start, p.end)).collect()
}

#[test]
fn loss_values() {
    assert_eq!(selector_loss(1.0, true, 1.0, 5.0).0, 0.0);
    assert_eq!(selector_loss(0.0, false, 1.0, 5.0).0, 1.0);
    assert_eq!(selector_loss(-1.0, true, 1.0, 5.0).0, 10.0);
    assert_eq!(selector_loss(-1.0, false, 1.0, 5.0).0, 0.0);
    assert_eq!(selector_loss(0.5, true, 1.0, 2.0), (1.0, -2.0));
    assert_eq!(selector_loss(0.5, false, 1.0, 2.0), (1.5, 1.0));
}

#[test]
fn threshold_inference() {
    let x = scored(&[(0, 1, -0.5), (2, 3, 0.1), (4, 5, 2.0)]);
    assert_eq!(infer_threshold(&x, 0.0).len(), 2);
    assert!(infer_threshold(&x, f64::INFINITY).is_empty());
    assert_eq!(infer_threshold(&x, f64::NEG_INFINITY), x);
}

#[test]
fn greedy_inference() {
    let x = scored(&[(0, 2, 0.5), (1, 3, 0.9), (4, 5, 0.3)]);
    assert_eq!(spans(&infer_greedy(&x, 0.0)), vec![(1, 3), (4, 5)]);

    let nested = scored(&[(0, 5, 1.0), (1, 2, 2.0)]);
    assert_eq!(spans(&infer_greedy(&nested, 0.0)), vec![(1, 2)]);

    let disjoint = scored(&[(0, 1, 0.4), (3, 4, 0.2), (6, 8, 1.0)]);
    assert_eq!(
        infer_greedy(&disjoint, 0.0),
        infer_threshold(&disjoint, 0.0)
    );

    let tied = scored(&[(2, 3, 1.0), (0, 3, 1.0), (0, 2, 1.0)]);
    assert_eq!(spans(&infer_greedy(&tied, 0.0)), vec![(0, 3)]);
}

#[test]
fn greedy_separates_sentences_and_documents() {
    let mut x = scored(&[(0, 2, 0.5), (0, 2, 0.7)]);
    x[1].sentence = 1;
    assert_eq!(infer_greedy(&x, 0.0).len(), 2);
    x[1].sentence = 0;
    x[1].doc_id = "e".into();
    assert_eq!(infer_greedy(&x, 0.0).len(), 2);
}

#[test]
fn labels_need_span_and_entity() {
    let doc = document();
    let linked = vec![
        LinkedSpan {
            doc_id: doc.doc_id.clone(),
            sentence: 0,
            start: 4,
            end: 6,
            text: "heart attack".into(),
            matches: vec![sample(4, 6, "C1", NameType::PrimaryName, 0.8, true).candidate],
        },
        LinkedSpan {
            doc_id: doc.doc_id.clone(),
            sentence: 0,
            start: 4,
            end: 5,
            text: "heart".into(),
            matches: vec![sample(4, 5, "C1", NameType::PrimaryName, 0.8, true).candidate],
        },
    ];
    let gold = crate::eval::GoldMention::from_documents(&[doc]);
    let s = selector_samples(&linked, &gold);
    assert_eq!(
        s.iter().map(|s| s.label).collect::<Vec<_>>(),
        vec![true, false]
    );
    let mut wrong = linked[..1].to_vec();
    wrong[0].matches[0].entity_id = "C2".into();
    assert!(!selector_samples(&wrong, &gold)[0].label);
}

#[test]
fn zero_head_scores_zero() {
    let (mut model, examples, _) = setup();
    for name in [
        "head.w1", "head.b1", "head.w2", "head.b2", "head.w3", "head.b3",
    ] {
        let i = model.params().index_of(name).unwrap();
        model.params_mut().get_mut(i).data.fill(0.0);
    }
    let s = score_examples(&model, model.params(), &examples).unwrap();
    assert!(s.iter().all(|p| p.score == 0.0));
    let batch: Vec<&SelectorExample> = examples.iter().collect();
    let mut g = model.params().zeros_like();
    let loss = batch_loss_grad(&model, model.params(), &batch, 1.0, 5.0, &mut g, None).unwrap();
    assert_eq!(loss, (5.0 + 1.0 + 1.0 + 1.0) / 4.0);
}

#[test]
fn probability_feature_changes_score() {
    let (model, examples, _) = setup();
    let ex = &examples[0];
    let a = model.score(&ex.input, &ex.features).unwrap();
    assert_eq!(a, model.score(&ex.input, &ex.features).unwrap());
    let mut f = ex.features;
    f.linker_prob = 0.1;
    assert_ne!(a, model.score(&ex.input, &f).unwrap());
}

#[test]
fn gradient_matches_finite_differences() {
    let (model, examples, _) = setup();
    let batch: Vec<&SelectorExample> = examples.iter().collect();
    for s in score_examples(&model, model.params(), &examples).unwrap() {
        assert!(
            (s.score.abs() - 1.0).abs() > 1e-3,
            "sample too close to a hinge: {}",
            s.score
        );
    }
    let loss = |p: &Params<f64>| {
        let mut g = p.zeros_like();
        batch_loss_grad(&model, p, &batch, 1.0, 5.0, &mut g, None).unwrap()
    };
    let grad = |p: &Params<f64>| {
        let mut g = p.zeros_like();
        batch_loss_grad(&model, p, &batch, 1.0, 5.0, &mut g, None).unwrap();
        g
    };
    let report = grad_check(model.params(), loss, grad, &GradCheckOptions::default());
    assert!(report.ensure(1e-4).is_ok(), "{:?}", report.worst());
}

#[test]
fn training_fits_and_sweeps() {
    let (model, examples, _) = setup();
    let config = SelectorConfig {
        lr: 1e-2,
        epochs: 60,
        batch_size: 1,
        weight_grid: vec![1.0, 5.0],
        ..SelectorConfig::default()
    };
    let (best, w, rows) = sweep_positive_weight(&model, &examples, None, &config, 5).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(
        rows.iter().map(|r| r.positive_weight).collect::<Vec<_>>(),
        vec![1.0, 5.0]
    );
    assert!(rows.iter().all(|r| r.epochs.len() == 60));
    assert!(config.weight_grid.contains(&w));
    let pred = infer_threshold(
        &score_examples(&best, best.params(), &examples).unwrap(),
        0.0,
    );
    assert!(pred
        .iter()
        .any(|p| (p.start, p.end, p.entity_id.as_str()) == (4, 6, "C1")));
    assert!(pred.iter().all(|p| p.entity_id == "C1"));
}

#[test]
fn no_positives_rejected() {
    let (mut model, mut examples, _) = setup();
    examples.retain(|e| !e.sample.label);
    let r = train_selector(
        &mut model,
        &examples,
        None,
        &SelectorConfig::default(),
        5.0,
        0,
    );
    assert!(matches!(r, Err(Error::NoTrainingData(_))));
    let mut linker = ScoringModel::new(tiny_spec(Role::Linker), model.vocab().clone(), 0).unwrap();
    assert!(train_selector(
        &mut linker,
        &examples,
        None,
        &SelectorConfig::default(),
        5.0,
        0
    )
    .is_err());
}
