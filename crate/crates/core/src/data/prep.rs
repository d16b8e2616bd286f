use std::collections::HashMap;

use super::{BinaryMatrix, Event, InteractionLog, TokenIndex, Vocabulary};
use crate::{Error, Result};

/// Repeatedly drops users with `<= min_user_events` events and items with
/// `<= min_item_events` events until both conditions hold for every survivor.
pub fn filter_min_activity(
    log: &InteractionLog,
    min_user_events: usize,
    min_item_events: usize,
) -> InteractionLog {
    let mut alive = vec![true; log.events.len()];
    loop {
        let mut user_n: HashMap<&str, usize> = HashMap::new();
        let mut item_n: HashMap<&str, usize> = HashMap::new();
        for (e, _) in log.events.iter().zip(&alive).filter(|(_, &a)| a) {
            *user_n.entry(&e.user).or_default() += 1;
            *item_n.entry(&e.item).or_default() += 1;
        }
        let mut changed = false;
        // users first, then items against the pre-pass counts; the outer loop
        // takes care of whatever that exposes
        for (e, a) in log.events.iter().zip(alive.iter_mut()).filter(|(_, a)| **a) {
            if user_n[e.user.as_str()] <= min_user_events
                || item_n[e.item.as_str()] <= min_item_events
            {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let events: Vec<Event> = log
        .events
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(e, _)| e.clone())
        .collect();
    if events.is_empty() && !log.is_empty() {
        log::warn!("activity filter ({min_user_events}, {min_item_events}) removed every event");
    }
    InteractionLog::new(events)
}

/// Train / validation / test logs plus the two global cut timestamps.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionLog,
    pub valid: InteractionLog,
    pub test: InteractionLog,
    /// Last timestamp included in train, and in validation.
    pub cuts: (f64, f64),
}

/// Splits by two global timestamps so the event counts approximate the given
/// fractions. Events tied with a cut timestamp go to the earlier split.
pub fn temporal_split(log: &InteractionLog, fractions: (f64, f64, f64)) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let sorted = log.sorted_by_time();
    let n = sorted.len();
    if n == 0 {
        return Err(Error::Empty("cannot split an empty log".into()));
    }
    if sorted[0].timestamp == sorted[n - 1].timestamp {
        return Err(Error::invalid(
            "all events share one timestamp; no valid cut exists",
        ));
    }
    let cut_at = |frac: f64| {
        let k = ((frac * n as f64).round() as usize).clamp(1, n);
        sorted[k - 1].timestamp
    };
    let t1 = cut_at(ft);
    let t2 = cut_at(ft + fv).max(t1);

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for e in sorted {
        if e.timestamp <= t1 {
            train.push(e);
        } else if e.timestamp <= t2 {
            valid.push(e);
        } else {
            test.push(e);
        }
    }
    Ok(Split {
        train: InteractionLog::new(train),
        valid: InteractionLog::new(valid),
        test: InteractionLog::new(test),
        cuts: (t1, t2),
    })
}

/// Collapses a log into a 0/1 matrix; counts and duplicates are discarded.
/// User and item indices follow bytewise token order.
pub fn to_binary_matrix(log: &InteractionLog) -> Result<(BinaryMatrix, Vocabulary)> {
    if log.is_empty() {
        return Err(Error::Empty(
            "cannot build a matrix from an empty log".into(),
        ));
    }
    let vocab = Vocabulary {
        users: TokenIndex::from_tokens(log.events.iter().map(|e| e.user.as_str())),
        items: TokenIndex::from_tokens(log.events.iter().map(|e| e.item.as_str())),
    };
    let (matrix, dropped) = vocab.map_log(log);
    debug_assert_eq!(dropped, 0);
    Ok((matrix, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_of(rows: &[(&str, &str, f64)]) -> InteractionLog {
        InteractionLog::new(rows.iter().map(|&(u, i, t)| Event::new(u, i, t)).collect())
    }

    #[test]
    fn zero_thresholds_keep_everything() {
        let log = log_of(&[("u1", "a", 1.0), ("u2", "b", 2.0), ("u2", "b", 3.0)]);
        assert_eq!(filter_min_activity(&log, 0, 0), log);
    }

    #[test]
    fn removal_cascades_to_fixpoint() {
        // u3 keeps two events until c (single consumer) goes, then drops to one
        let log = log_of(&[
            ("u1", "a", 1.0),
            ("u1", "b", 2.0),
            ("u2", "a", 3.0),
            ("u2", "b", 4.0),
            ("u3", "a", 5.0),
            ("u3", "c", 6.0),
        ]);
        let out = filter_min_activity(&log, 1, 1);
        let kept: Vec<(&str, &str)> = out
            .events
            .iter()
            .map(|e| (e.user.as_str(), e.item.as_str()))
            .collect();
        assert_eq!(
            kept,
            vec![("u1", "a"), ("u1", "b"), ("u2", "a"), ("u2", "b")]
        );
    }

    #[test]
    fn strictly_greater_than_threshold() {
        // three events is not "greater than three"
        let mut rows = vec![];
        for u in ["x", "y"] {
            for k in 0..3 {
                rows.push((u, "a", k as f64));
            }
        }
        rows.push(("y", "a", 9.0));
        let out = filter_min_activity(&log_of(&rows), 3, 0);
        assert!(out.events.iter().all(|e| e.user == "y"));
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn cascade_can_empty_the_log() {
        let log = log_of(&[
            ("u1", "a", 1.0),
            ("u1", "b", 2.0),
            ("u2", "a", 3.0),
            ("u2", "c", 4.0),
            ("u3", "c", 5.0),
        ]);
        assert!(filter_min_activity(&log, 1, 1).is_empty());
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let rows: Vec<Event> = (0..100)
            .map(|k| Event::new(format!("u{}", k % 7), format!("i{k}"), k as f64))
            .collect();
        let s = temporal_split(&InteractionLog::new(rows), (0.70, 0.15, 0.15)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (70, 15, 15));
        assert_eq!(s.cuts, (69.0, 84.0));
    }

    #[test]
    fn ties_at_cut_go_to_the_earlier_split() {
        // times 68..=71 collapse onto 68 and 83..=86 onto 83
        let rows: Vec<Event> = (0..100)
            .map(|k| {
                let t = match k {
                    68..=71 => 68,
                    83..=86 => 83,
                    _ => k,
                };
                Event::new("u", format!("i{k}"), t as f64)
            })
            .collect();
        let s = temporal_split(&InteractionLog::new(rows), (0.70, 0.15, 0.15)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (72, 15, 13));
        let rows: Vec<Event> = (0..100)
            .map(|k| {
                let t = match k {
                    68..=71 => 68,
                    84..=87 => 84,
                    _ => k,
                };
                Event::new("u", format!("i{k}"), t as f64)
            })
            .collect();
        let s = temporal_split(&InteractionLog::new(rows), (0.70, 0.15, 0.15)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (72, 16, 12));
    }

    #[test]
    fn degenerate_fractions_rejected() {
        let log = log_of(&[("u", "a", 1.0), ("u", "b", 2.0)]);
        assert!(temporal_split(&log, (1.0, 0.0, 0.0)).is_err());
        assert!(temporal_split(&log, (0.5, 0.3, 0.3)).is_err());
    }

    #[test]
    fn single_timestamp_is_fatal() {
        let log = log_of(&[("u", "a", 5.0), ("v", "b", 5.0), ("w", "c", 5.0)]);
        assert!(temporal_split(&log, (0.7, 0.15, 0.15)).is_err());
    }

    #[test]
    fn duplicates_collapse() {
        let log = log_of(&[
            ("u1", "i1", 1.0),
            ("u1", "i1", 2.0),
            ("u2", "i2", 3.0),
            ("u1", "i2", 4.0),
        ]);
        let (m, vocab) = to_binary_matrix(&log).unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.nnz()), (2, 2, 3));
        assert!((m.density() - 0.75).abs() < 1e-15);
        assert_eq!(vocab.items.token(1), "i2");
        assert!(to_binary_matrix(&InteractionLog::default()).is_err());
    }

    proptest! {
        #[test]
        fn split_is_ordered_and_lossless(times in proptest::collection::vec(0u32..40, 3..120)) {
            let events: Vec<Event> = times.iter().enumerate()
                .map(|(k, &t)| Event::new(format!("u{}", k % 5), format!("i{}", k % 11), t as f64))
                .collect();
            let log = InteractionLog::new(events);
            prop_assume!(times.iter().min() != times.iter().max());
            let s = temporal_split(&log, (0.7, 0.15, 0.15)).unwrap();
            let max_t = |l: &InteractionLog| l.events.iter().map(|e| e.timestamp).fold(f64::MIN, f64::max);
            let min_t = |l: &InteractionLog| l.events.iter().map(|e| e.timestamp).fold(f64::MAX, f64::min);
            prop_assert!(max_t(&s.train) < min_t(&s.valid) || s.valid.is_empty());
            prop_assert!(max_t(&s.train) < min_t(&s.test) || s.test.is_empty());
            prop_assert!(max_t(&s.valid) < min_t(&s.test) || s.valid.is_empty() || s.test.is_empty());
            let mut joined = s.train.events.clone();
            joined.extend(s.valid.events.clone());
            joined.extend(s.test.events.clone());
            prop_assert_eq!(joined, log.sorted_by_time());
        }

        #[test]
        fn filter_reaches_fixpoint(
            pairs in proptest::collection::vec((0u8..8, 0u8..8), 0..80),
            mu in 0usize..4, mi in 0usize..4,
        ) {
            let log = InteractionLog::new(pairs.iter().enumerate()
                .map(|(k, &(u, i))| Event::new(format!("u{u}"), format!("i{i}"), k as f64)).collect());
            let out = filter_min_activity(&log, mu, mi);
            let mut un: HashMap<&str, usize> = HashMap::new();
            let mut inn: HashMap<&str, usize> = HashMap::new();
            for e in &out.events {
                *un.entry(&e.user).or_default() += 1;
                *inn.entry(&e.item).or_default() += 1;
            }
            prop_assert!(un.values().all(|&c| c > mu));
            prop_assert!(inn.values().all(|&c| c > mi));
        }
    }
}
