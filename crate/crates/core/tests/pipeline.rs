use qpitch_core::data_io::{parse_events, parse_tracking, write_events, write_tracking};
use qpitch_core::pipeline::{process_corpus, split_possessions, train_agents, value_corpus};
use qpitch_core::rewards::EpvSurface;
use qpitch_core::synth::generate_corpus;
use qpitch_core::training::TrainConfig;
use qpitch_core::types::{PitchConfig, MAX_FRAMES, MIN_FRAMES, N_ACTIONS, N_AGENTS};

#[test]
fn csv_round_trip_gives_the_same_possessions() {
    let matches = generate_corpus(4, 12, 4, 0.3, 0.3).unwrap();
    let hz = matches[0].hz;
    let tracking: Vec<_> = matches.iter().flat_map(|m| m.tracking.clone()).collect();
    let events: Vec<_> = matches.iter().flat_map(|m| m.events.clone()).collect();

    let mut tbuf = Vec::new();
    write_tracking(&mut tbuf, hz, &tracking).unwrap();
    let mut ebuf = Vec::new();
    write_events(&mut ebuf, &events).unwrap();
    let t = parse_tracking(&tbuf[..], "tracking").unwrap();
    let e = parse_events(&ebuf[..], "events").unwrap();
    assert_eq!(t.hz, hz);

    let pitch = PitchConfig::default();
    let epv = EpvSurface::default();
    let direct = process_corpus(&tracking, hz, &events, hz, &pitch, &epv, 1).unwrap();
    let parsed = process_corpus(&t.records, t.hz, &e.records, e.hz.unwrap_or(t.hz), &pitch, &epv, 1).unwrap();
    assert_eq!(direct.len(), 3);
    assert_eq!(direct, parsed);
}

#[test]
fn corpus_to_valuation_grids() {
    let matches = generate_corpus(6, 10, 5, 0.4, 0.2).unwrap();
    let tracking: Vec<_> = matches.iter().flat_map(|m| m.tracking.clone()).collect();
    let events: Vec<_> = matches.iter().flat_map(|m| m.events.clone()).collect();
    let out = process_corpus(&tracking, 25, &events, 25, &PitchConfig::default(), &EpvSurface::default(), 2).unwrap();
    let ps: Vec<_> = out.into_iter().flat_map(|o| o.possessions).collect();
    for p in &ps {
        assert!((MIN_FRAMES..=MAX_FRAMES).contains(&p.len()));
        assert_eq!(p.actions.len(), N_AGENTS);
    }
    let (train, test) = split_possessions(&ps, 6, 0.2);
    assert_eq!(train.len() + test.len(), ps.len());

    let cfg = TrainConfig {
        epochs: 1,
        agent_ids: (0..N_AGENTS).collect(),
        hidden: 8,
        ..TrainConfig::default()
    };
    let models: Vec<_> = train_agents(&train, &cfg, 2).unwrap().into_iter().map(|(_, o)| o.params).collect();
    let grids = value_corpus(&models, &ps, 2).unwrap();
    assert_eq!(grids.len(), ps.len());
    for (g, p) in grids.iter().zip(&ps) {
        assert_eq!(g.possession_id, p.possession_id);
        assert_eq!(g.n_frames, p.len());
        assert_eq!(g.q(N_AGENTS - 1, p.len() - 1).len(), N_ACTIONS);
    }
}
