//! In-process network shared by all rank contexts of one session.
//!
//! Each destination rank owns a mailbox holding messages in arrival order.
//! Matching always takes the first eligible message, so delivery is FIFO per
//! (source, destination, context, tag). A separate control channel carries
//! checkpoint coordination and never touches the mailboxes.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::BackendError;

/// One message in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub src: u32,
    /// Backend-private communication context.
    pub context: u64,
    pub tag: i32,
    pub payload: Vec<u8>,
}

#[derive(Default)]
struct Mailbox {
    queue: Mutex<MailboxState>,
    arrived: Condvar,
}

#[derive(Default)]
struct MailboxState {
    messages: VecDeque<Message>,
    generation: u64,
}

struct BarrierState {
    arrived: u32,
    generation: u64,
    vote: bool,
    result: bool,
}

pub struct Transport {
    world_size: u32,
    mailboxes: Vec<Mailbox>,
    control: Mutex<BarrierState>,
    control_cv: Condvar,
    checkpoint_requested: AtomicBool,
    timeout: Duration,
}

impl Transport {
    pub fn new(world_size: u32) -> Transport {
        Transport::with_timeout(world_size, Duration::from_secs(60))
    }

    /// `timeout` bounds every blocking wait; expiry is reported as an error
    /// rather than hanging a misbehaving program forever.
    pub fn with_timeout(world_size: u32, timeout: Duration) -> Transport {
        Transport {
            world_size,
            mailboxes: (0..world_size).map(|_| Mailbox::default()).collect(),
            control: Mutex::new(BarrierState { arrived: 0, generation: 0, vote: false, result: false }),
            control_cv: Condvar::new(),
            checkpoint_requested: AtomicBool::new(false),
            timeout,
        }
    }

    pub fn world_size(&self) -> u32 {
        self.world_size
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn enqueue(&self, dst: u32, msg: Message) {
        let mb = &self.mailboxes[dst as usize];
        let mut st = mb.queue.lock().unwrap();
        st.messages.push_back(msg);
        st.generation += 1;
        mb.arrived.notify_all();
    }

    /// Remove and return the first message at `dst` satisfying `pred`.
    pub fn take_first(&self, dst: u32, pred: impl Fn(&Message) -> bool) -> Option<Message> {
        let mut st = self.mailboxes[dst as usize].queue.lock().unwrap();
        let pos = st.messages.iter().position(pred)?;
        st.messages.remove(pos)
    }

    /// Run `f` with exclusive access to the messages queued at `dst`.
    pub fn with_queue<R>(&self, dst: u32, f: impl FnOnce(&mut VecDeque<Message>) -> R) -> R {
        let mut st = self.mailboxes[dst as usize].queue.lock().unwrap();
        f(&mut st.messages)
    }

    /// Inspect the first message at `dst` satisfying `pred` without removing it.
    pub fn peek_first<R>(&self, dst: u32, pred: impl Fn(&Message) -> bool, f: impl FnOnce(&Message) -> R) -> Option<R> {
        let st = self.mailboxes[dst as usize].queue.lock().unwrap();
        st.messages.iter().find(|m| pred(m)).map(f)
    }

    /// Counter bumped on every arrival at `dst`.
    pub fn generation(&self, dst: u32) -> u64 {
        self.mailboxes[dst as usize].queue.lock().unwrap().generation
    }

    /// Block until something new arrives at `dst` after `seen`. Returns false
    /// when `deadline` passes first.
    pub fn wait_arrival(&self, dst: u32, seen: u64, deadline: Instant) -> bool {
        let mb = &self.mailboxes[dst as usize];
        let mut st = mb.queue.lock().unwrap();
        while st.generation == seen {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = mb.arrived.wait_timeout(st, deadline - now).unwrap().0;
        }
        true
    }

    /// Messages waiting at `dst` whose context satisfies `pred`.
    pub fn pending_at(&self, dst: u32, pred: impl Fn(&Message) -> bool) -> usize {
        let st = self.mailboxes[dst as usize].queue.lock().unwrap();
        st.messages.iter().filter(|m| pred(m)).count()
    }

    /// Total messages held by the transport.
    pub fn pending_total(&self) -> usize {
        self.mailboxes
            .iter()
            .map(|mb| mb.queue.lock().unwrap().messages.len())
            .sum()
    }

    /// Out-of-band barrier across all ranks of the session.
    pub fn control_barrier(&self) -> Result<(), BackendError> {
        self.control_vote(false).map(|_| ())
    }

    /// Out-of-band barrier that also ORs one flag from every rank. Fails with
    /// `Timeout` if some rank never arrives.
    pub fn control_vote(&self, flag: bool) -> Result<bool, BackendError> {
        let mut st = self.control.lock().unwrap();
        let gen = st.generation;
        st.vote |= flag;
        st.arrived += 1;
        if st.arrived == self.world_size {
            st.result = st.vote;
            st.vote = false;
            st.arrived = 0;
            st.generation += 1;
            self.control_cv.notify_all();
            return Ok(st.result);
        }
        let deadline = Instant::now() + self.timeout;
        while st.generation == gen {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(BackendError::Timeout);
            }
            st = self.control_cv.wait_timeout(st, left).unwrap().0;
        }
        Ok(st.result)
    }

    /// Ask every rank to checkpoint at its next coordination point.
    pub fn request_checkpoint(&self) {
        self.checkpoint_requested.store(true, Ordering::SeqCst);
    }

    pub fn checkpoint_requested(&self) -> bool {
        self.checkpoint_requested.load(Ordering::SeqCst)
    }

    pub fn clear_checkpoint_request(&self) {
        self.checkpoint_requested.store(false, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn msg(src: u32, tag: i32, byte: u8) -> Message {
        Message { src, context: 1, tag, payload: vec![byte] }
    }

    #[test]
    fn first_match_is_fifo_per_tag() {
        let t = Transport::new(2);
        t.enqueue(1, msg(0, 5, 1));
        t.enqueue(1, msg(0, 6, 2));
        t.enqueue(1, msg(0, 5, 3));
        let m = t.take_first(1, |m| m.tag == 5).unwrap();
        assert_eq!(m.payload, vec![1]);
        let m = t.take_first(1, |m| m.tag == 5).unwrap();
        assert_eq!(m.payload, vec![3]);
        assert_eq!(t.pending_total(), 1);
    }

    #[test]
    fn control_vote_ors_flags() {
        let t = Arc::new(Transport::new(4));
        let results: Vec<bool> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..4)
                .map(|r| {
                    let t = t.clone();
                    s.spawn(move || t.control_vote(r == 2).unwrap())
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results, vec![true; 4]);
        let again: Vec<bool> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..4)
                .map(|_| {
                    let t = t.clone();
                    s.spawn(move || t.control_vote(false).unwrap())
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(again, vec![false; 4]);
    }

    #[test]
    fn wait_arrival_times_out() {
        let t = Transport::new(1);
        let g = t.generation(0);
        assert!(!t.wait_arrival(0, g, Instant::now() + Duration::from_millis(10)));
        t.enqueue(0, msg(0, 0, 0));
        assert!(t.wait_arrival(0, g, Instant::now() + Duration::from_millis(10)));
    }
}
