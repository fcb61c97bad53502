//! Cursors, continuation frames and interned continuation shapes.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use crate::action::{Closure, Value};
use crate::expr::{ExprId, StopSet, StopToken};

/// Values produced by sub-matches of one rule invocation, newest first.
#[derive(Clone, Default)]
pub(crate) struct Children(Option<Rc<Child>>);

pub(crate) struct Child {
    value: Value,
    start: usize,
    end: usize,
    prev: Children,
}

impl Drop for Child {
    fn drop(&mut self) {
        let mut prev = self.prev.0.take();
        while let Some(rc) = prev {
            match Rc::try_unwrap(rc) {
                Ok(mut c) => prev = c.prev.0.take(),
                Err(_) => break,
            }
        }
    }
}

impl Children {
    pub fn single(value: Value, start: usize, end: usize) -> Children {
        Children::default().push(value, start, end)
    }

    pub fn push(&self, value: Value, start: usize, end: usize) -> Children {
        Children(Some(Rc::new(Child {
            value,
            start,
            end,
            prev: self.clone(),
        })))
    }

    /// Oldest first.
    pub fn to_vec(&self) -> Vec<(Value, usize, usize)> {
        let mut out = Vec::new();
        let mut cur = self.0.as_deref();
        while let Some(c) = cur {
            out.push((c.value.clone(), c.start, c.end));
            cur = c.prev.0.as_deref();
        }
        out.reverse();
        out
    }
}

#[derive(Clone)]
pub(crate) struct Cursor {
    pub pos: usize,
    pub stops: StopSet,
    pub closure: Closure,
    /// Value set explicitly by an action of the current rule invocation.
    pub returned: Option<Value>,
    /// Most recent value produced, read by bindings.
    pub last: Value,
    pub children: Children,
    /// Start of the innermost rule or binding scope.
    pub scope: usize,
    /// Matching inside a lookahead: actions may be skipped.
    pub lookahead: bool,
}

impl Cursor {
    pub fn at(pos: usize) -> Cursor {
        Cursor {
            pos,
            stops: StopSet::new(),
            closure: Closure::default(),
            returned: None,
            last: Value::None,
            children: Children::default(),
            scope: pos,
            lookahead: false,
        }
    }
}

/// Rule-invocation state set aside while a callee runs.
#[derive(Clone, Default)]
pub(crate) struct Saved {
    pub closure: Closure,
    pub returned: Option<Value>,
    pub children: Children,
    pub scope: usize,
}

impl Saved {
    pub fn take(c: &mut Cursor) -> Saved {
        Saved {
            closure: std::mem::take(&mut c.closure),
            returned: c.returned.take(),
            children: std::mem::take(&mut c.children),
            scope: c.scope,
        }
    }

    pub fn restore(&self, c: &mut Cursor) {
        c.closure = self.closure.clone();
        c.returned = self.returned.clone();
        c.children = self.children.clone();
        c.scope = self.scope;
    }
}

pub(crate) enum Frame {
    Accept {
        end: bool,
    },
    Seq(ExprId),
    Loop {
        stop: StopToken,
        body: ExprId,
    },
    RuleReturn {
        rule: usize,
        start: usize,
        saved: Saved,
    },
    BindEnd {
        var: Arc<str>,
        start: usize,
        scope: usize,
    },
    ReduceEnd {
        rule: Arc<str>,
        start: usize,
        saved: Saved,
    },
    EnterEnd {
        inner: ExprId,
        start: usize,
    },
    Commit(Rc<Cell<bool>>),
}

pub(crate) type K = Rc<Cont>;

pub(crate) struct Cont {
    pub frame: Frame,
    pub next: Option<K>,
    pub shape: u32,
    /// Some frame of the chain depends on semantic values.
    pub dependent: bool,
}

impl Drop for Cont {
    fn drop(&mut self) {
        let mut next = self.next.take();
        while let Some(rc) = next {
            match Rc::try_unwrap(rc) {
                Ok(mut c) => next = c.next.take(),
                Err(_) => break,
            }
        }
    }
}

impl Cont {
    pub fn next(&self) -> K {
        self.next
            .clone()
            .expect("continuation chain ends in an accept frame")
    }
}

/// The matching-relevant part of a frame. Expressions are action-forgotten.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum FrameKey {
    Accept { end: bool },
    Seq(ExprId),
    Loop(StopToken, ExprId),
}

pub(crate) const NO_SHAPE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ShapeInfo {
    pub key: FrameKey,
    pub next: u32,
    /// Lower bound on input consumed by the chain.
    pub min: u64,
    pub depth: u32,
}

#[derive(Default)]
pub(crate) struct Shapes {
    ids: HashMap<(FrameKey, u32), u32>,
    infos: Vec<ShapeInfo>,
}

impl Shapes {
    pub fn intern(&mut self, key: FrameKey, next: u32, frame_min: u64) -> u32 {
        if let Some(&id) = self.ids.get(&(key, next)) {
            return id;
        }
        let (next_min, next_depth) = if next == NO_SHAPE {
            (0, 0)
        } else {
            let n = self.infos[next as usize];
            (n.min, n.depth)
        };
        let id = self.infos.len() as u32;
        self.infos.push(ShapeInfo {
            key,
            next,
            min: frame_min.saturating_add(next_min),
            depth: next_depth + 1,
        });
        self.ids.insert((key, next), id);
        id
    }

    pub fn info(&self, id: u32) -> ShapeInfo {
        self.infos[id as usize]
    }
}
