//! Contact-confirming app.
//!
//! An infector who uses the app may register once, when entering state I.
//! A contact between infector `i` and agent `j` notifies `j` when `i` uses
//! the app, `i` is registered and `j` uses the app. A notification opens a
//! window of `notification_days` days during which `j` goes out less often;
//! a new notification replaces the window, reductions never stack.

use std::collections::VecDeque;
use std::io;

use crate::contact::ContactEvent;
use crate::domain::{Agent, AppParams};
use crate::rng::RngStream;

/// A user's notification window, inclusive of its last day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotificationState {
    pub agent_id: usize,
    pub notified_until_day: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactLogEntry {
    pub day: u32,
    pub step: u32,
    pub infector_id: usize,
    pub other_id: usize,
    pub notified: bool,
}

/// Contacts between app users, kept for `retention_days` days.
#[derive(Debug, Clone, Default)]
pub struct ContactLog {
    retention_days: u32,
    entries: VecDeque<ContactLogEntry>,
}

impl ContactLog {
    pub fn new(retention_days: u32) -> Self {
        ContactLog {
            retention_days,
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, entry: ContactLogEntry) {
        self.entries.push_back(entry);
    }

    /// Drops entries recorded `retention_days` or more days before `day`.
    pub fn prune(&mut self, day: u32) {
        while let Some(front) = self.entries.front() {
            if day - front.day >= self.retention_days {
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &ContactLogEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Registration draw at the onset of state I. Non-users return `false`
/// without consuming a draw.
pub fn maybe_register(agent: &Agent, registration_rate: f64, app_stream: &mut RngStream) -> bool {
    if !agent.app_user {
        return false;
    }
    app_stream
        .next_bernoulli(registration_rate)
        .expect("registration rate validated")
}

pub fn is_notification_active(agent: &Agent, day: u32) -> bool {
    agent.notified_until_day.is_some_and(|until| day <= until)
}

/// Evaluates one step's contacts. Returns at most one update per notified
/// agent (events arrive sorted by `other_id`). When `log` is given, every
/// contact between two app users is recorded with its outcome.
pub fn process_contacts(
    events: &[ContactEvent],
    agents: &[Agent],
    app: &AppParams,
    day: u32,
    notification_days: u32,
    mut log: Option<&mut Vec<ContactLogEntry>>,
) -> Vec<NotificationState> {
    let mut updates: Vec<NotificationState> = Vec::new();
    if app.usage_rate == 0.0 {
        return updates;
    }
    for e in events {
        let infector = &agents[e.infector_id];
        let other = &agents[e.other_id];
        if !(infector.app_user && other.app_user) {
            continue;
        }
        let notified = infector.registered;
        if notified && updates.last().is_none_or(|u| u.agent_id != other.id) {
            updates.push(NotificationState {
                agent_id: other.id,
                notified_until_day: day + notification_days,
            });
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(ContactLogEntry {
                day,
                step: e.step.step(),
                infector_id: e.infector_id,
                other_id: e.other_id,
                notified,
            });
        }
    }
    updates
}

pub fn apply_notifications(agents: &mut [Agent], updates: &[NotificationState]) {
    for u in updates {
        agents[u.agent_id].notified_until_day = Some(u.notified_until_day);
    }
}

pub fn write_contact_log_csv<W: io::Write>(entries: &[ContactLogEntry], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "step", "infector_id", "other_id", "notified"])?;
    for e in entries {
        w.write_record([
            e.day.to_string(),
            e.step.to_string(),
            e.infector_id.to_string(),
            e.other_id.to_string(),
            u8::from(e.notified).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
