//! Live meal sessions: the online model predicts each bite before the diner
//! reports it.
//!
//! Every session event takes the next sequence number of its session. The
//! prediction for a position is always numbered before the choice it is
//! scored against.

use indexmap::IndexMap;
use serde::Serialize;
use sparcs_core::hmm::{predict_next, DiscreteHmm, HmmError, MealSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SessionStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub position: usize,
    pub prefix: Vec<String>,
    pub prediction: String,
    pub prediction_seq: u64,
    pub choice: String,
    pub choice_seq: u64,
    pub matched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Prediction {
    item: usize,
    seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChoiceError {
    Complete,
    UnknownItem(String),
    Exhausted(String),
}

#[derive(Debug, Clone)]
pub struct MealSession {
    id: String,
    scenario_id: String,
    scenario_version: u64,
    meal: MealSpec,
    model: DiscreteHmm,
    sequence: Vec<usize>,
    remaining: Vec<usize>,
    history: Vec<HistoryEntry>,
    pending: Option<Prediction>,
    next_seq: u64,
    matches: usize,
}

/// Wire form returned by every session endpoint.
#[derive(Debug, Serialize)]
pub struct SessionView<'a> {
    pub session_id: &'a str,
    pub scenario_id: &'a str,
    pub scenario_version: u64,
    pub status: SessionStatus,
    pub meal_length: usize,
    pub remaining: IndexMap<&'a str, usize>,
    pub history: &'a [HistoryEntry],
    /// Prediction for the next position; absent once the meal is complete.
    pub prediction_next: Option<&'a str>,
    pub prediction_seq: Option<u64>,
    /// Matches over choices; absent before the first choice.
    pub accuracy_so_far: Option<f64>,
    pub model: &'a DiscreteHmm,
}

impl MealSession {
    pub fn new(
        id: String,
        scenario_id: String,
        scenario_version: u64,
        meal: MealSpec,
        model: DiscreteHmm,
    ) -> Result<Self, HmmError> {
        let remaining = meal.full_inventory();
        let mut session = Self {
            id,
            scenario_id,
            scenario_version,
            meal,
            model,
            sequence: Vec::new(),
            remaining,
            history: Vec::new(),
            pending: None,
            next_seq: 0,
            matches: 0,
        };
        session.predict()?;
        Ok(session)
    }

    fn take_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    fn predict(&mut self) -> Result<(), HmmError> {
        self.pending = if self.remaining.iter().any(|&r| r > 0) {
            let item = predict_next(&self.model, &self.sequence, &self.remaining)?;
            Some(Prediction { item, seq: self.take_seq() })
        } else {
            None
        };
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn scenario_version(&self) -> u64 {
        self.scenario_version
    }

    pub fn status(&self) -> SessionStatus {
        if self.pending.is_some() {
            SessionStatus::Open
        } else {
            SessionStatus::Complete
        }
    }

    /// The eaten sequence, as item indices.
    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn accuracy(&self) -> Option<f64> {
        (!self.history.is_empty()).then(|| self.matches as f64 / self.history.len() as f64)
    }

    /// Scores the pending prediction against `item` and predicts the next
    /// position. Returns whether the meal is now complete.
    pub fn choose(&mut self, item: &str) -> Result<bool, ChoiceError> {
        let Some(prediction) = self.pending else {
            return Err(ChoiceError::Complete);
        };
        let index = self.meal.index_of(item).ok_or_else(|| ChoiceError::UnknownItem(item.to_owned()))?;
        if self.remaining[index] == 0 {
            return Err(ChoiceError::Exhausted(item.to_owned()));
        }
        let choice_seq = self.take_seq();
        let matched = prediction.item == index;
        self.matches += usize::from(matched);
        self.history.push(HistoryEntry {
            position: self.sequence.len(),
            prefix: self.meal.names(&self.sequence).into_iter().map(str::to_owned).collect(),
            prediction: self.meal.items[prediction.item].clone(),
            prediction_seq: prediction.seq,
            choice: item.to_owned(),
            choice_seq,
            matched,
        });
        self.sequence.push(index);
        self.remaining[index] -= 1;
        // The model is consistent with the meal, so prediction cannot fail.
        self.predict().expect("prediction over a validated meal");
        Ok(self.pending.is_none())
    }

    pub fn view(&self) -> SessionView<'_> {
        SessionView {
            session_id: &self.id,
            scenario_id: &self.scenario_id,
            scenario_version: self.scenario_version,
            status: self.status(),
            meal_length: self.meal.len(),
            remaining: self.meal.items.iter().map(String::as_str).zip(self.remaining.iter().copied()).collect(),
            history: &self.history,
            prediction_next: self.pending.map(|p| self.meal.items[p.item].as_str()),
            prediction_seq: self.pending.map(|p| p.seq),
            accuracy_so_far: self.accuracy(),
            model: &self.model,
        }
    }
}
