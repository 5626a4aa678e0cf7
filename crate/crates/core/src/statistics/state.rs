use super::StatisticsError;
use crate::event_data::{ActorId, CovariateSet, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Send,
    Receive,
}

/// The part of the event history `A_t` that statistics depend on, updated
/// one event at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqState {
    n_nodes: usize,
    last_event: Option<(ActorId, ActorId)>,
    last_time: f64,
    // most recent first, distinct
    send_recency: Vec<Vec<ActorId>>,
    receive_recency: Vec<Vec<ActorId>>,
    counts: Vec<u32>,
    n_events: usize,
    context: Option<usize>,
}

impl SeqState {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            last_event: None,
            last_time: 0.0,
            send_recency: vec![Vec::new(); n_nodes],
            receive_recency: vec![Vec::new(); n_nodes],
            counts: vec![0; n_nodes * n_nodes],
            n_events: 0,
            context: None,
        }
    }

    /// Empty state positioned at time 0 of `cov`'s context track.
    pub fn start(n_nodes: usize, cov: &CovariateSet) -> Self {
        let mut s = Self::new(n_nodes);
        s.context = cov.context_index_at(0.0);
        s
    }

    /// State after applying `events` in order.
    pub fn replayed(n_nodes: usize, events: &[Event], cov: &CovariateSet) -> Result<Self, StatisticsError> {
        let mut s = Self::start(n_nodes, cov);
        for e in events {
            s.apply(e, cov)?;
        }
        Ok(s)
    }

    pub fn last_event(&self) -> Option<(ActorId, ActorId)> {
        self.last_event
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn context(&self) -> Option<usize> {
        self.context
    }

    pub fn count(&self, i: ActorId, j: ActorId) -> u32 {
        self.counts[i * self.n_nodes + j]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn recency_list(&self, direction: Direction, i: ActorId) -> &[ActorId] {
        match direction {
            Direction::Send => &self.send_recency[i],
            Direction::Receive => &self.receive_recency[i],
        }
    }

    /// `1 / rank` of `j` in `i`'s recency list; 0 when `j` is absent.
    pub fn recency_rank(&self, direction: Direction, i: ActorId, j: ActorId) -> f64 {
        match self.recency_list(direction, i).iter().position(|&a| a == j) {
            Some(k) => 1.0 / (k + 1) as f64,
            None => 0.0,
        }
    }

    /// Moves the clock to `t` without an event, refreshing the context.
    pub fn advance_to(&mut self, t: f64, cov: &CovariateSet) {
        self.context = cov.context_index_at(t);
    }

    pub fn apply(&mut self, event: &Event, cov: &CovariateSet) -> Result<(), StatisticsError> {
        if self.n_events > 0 && !(event.time > self.last_time) {
            return Err(StatisticsError::OutOfOrder {
                time: event.time,
                last: self.last_time,
            });
        }
        let (i, j) = event.dyad();
        if i >= self.n_nodes || j >= self.n_nodes {
            return Err(StatisticsError::UnknownActor(i.max(j)));
        }
        promote(&mut self.send_recency[i], j);
        promote(&mut self.receive_recency[j], i);
        self.counts[i * self.n_nodes + j] += 1;
        self.last_event = Some((i, j));
        self.last_time = event.time;
        self.n_events += 1;
        self.context = cov.context_index_at(event.time);
        Ok(())
    }

    /// Pure form of [`SeqState::apply`].
    pub fn updated(&self, event: &Event, cov: &CovariateSet) -> Result<SeqState, StatisticsError> {
        let mut next = self.clone();
        next.apply(event, cov)?;
        Ok(next)
    }
}

fn promote(list: &mut Vec<ActorId>, actor: ActorId) {
    if let Some(k) = list.iter().position(|&a| a == actor) {
        list[..=k].rotate_right(1);
    } else {
        list.insert(0, actor);
    }
}
