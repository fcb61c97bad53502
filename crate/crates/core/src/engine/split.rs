//! Commit points: the shortest prefix of a choice's first branch after
//! which the second branch can no longer lead to a match.

use std::collections::HashMap;
use std::rc::Rc;

use super::cont::{FrameKey, Shapes, NO_SHAPE};
use crate::analysis::{CharSet, RegCache, RegLang};
use crate::expr::{ExprId, ExprNode, Grammar};

/// Frames of a continuation looked at; the rest is taken as `Σ*`.
const FRAME_LOOKAHEAD: u32 = 8;
const MAX_PREFIX_ITEMS: usize = 8;
const MAX_STATES: usize = 4000;

/// First characters of the words of a language, and whether it has the
/// empty word.
#[derive(Clone, Debug)]
pub(crate) struct First {
    pub chars: CharSet,
    pub nullable: bool,
}

impl First {
    fn then(&self, next: &First) -> First {
        if self.nullable {
            First {
                chars: self.chars.union(&next.chars),
                nullable: next.nullable,
            }
        } else {
            self.clone()
        }
    }

    /// Whether a word may start at a position whose next character is `c`
    /// (`None` at the end of input).
    pub fn admits(&self, c: Option<char>) -> bool {
        match c {
            Some(c) => self.chars.contains(c),
            None => self.nullable,
        }
    }
}

/// First sets of both branches of a choice, continuation included.
#[derive(Clone, Debug)]
pub(crate) struct Dispatch {
    pub first: First,
    pub second: First,
}

pub(crate) struct CommitPoints<'g> {
    g: &'g Grammar,
    regs: RegCache<'g>,
    langs: HashMap<(u32, u32), Rc<RegLang>>,
    cache: HashMap<(ExprId, u32), Option<usize>>,
    firsts: HashMap<ExprId, First>,
    shape_firsts: HashMap<u32, First>,
    dispatch: HashMap<(ExprId, u32), Rc<Dispatch>>,
}

impl<'g> CommitPoints<'g> {
    pub fn new(g: &'g Grammar) -> CommitPoints<'g> {
        CommitPoints {
            g,
            regs: RegCache::new(g),
            langs: HashMap::new(),
            cache: HashMap::new(),
            firsts: HashMap::new(),
            shape_firsts: HashMap::new(),
            dispatch: HashMap::new(),
        }
    }

    pub fn dispatch(
        &mut self,
        shapes: &Shapes,
        choice: ExprId,
        shape: u32,
    ) -> Option<Rc<Dispatch>> {
        if let Some(d) = self.dispatch.get(&(choice, shape)) {
            return Some(d.clone());
        }
        let ExprNode::Choice(f, alt) = self.g.node(choice) else {
            return None;
        };
        let (f, alt) = (*f, *alt);
        let info = shapes.info(shape);
        let k = self.shape_first(shapes, shape);
        let first = self.first(f).then(&k);
        let second = match (self.g.node(alt), info.key) {
            (ExprNode::Stop(s), FrameKey::Loop(t, _)) if *s == t => {
                self.shape_first(shapes, info.next)
            }
            _ => self.first(alt).then(&k),
        };
        let d = Rc::new(Dispatch { first, second });
        self.dispatch.insert((choice, shape), d.clone());
        Some(d)
    }

    fn first(&mut self, e: ExprId) -> First {
        if let Some(f) = self.firsts.get(&e) {
            return f.clone();
        }
        let l = self.regs.get(e);
        let f = First {
            chars: l.first_chars(),
            nullable: l.nullable(),
        };
        self.firsts.insert(e, f.clone());
        f
    }

    fn shape_first(&mut self, shapes: &Shapes, shape: u32) -> First {
        if shape == NO_SHAPE {
            return First {
                chars: CharSet::empty(),
                nullable: true,
            };
        }
        if let Some(f) = self.shape_firsts.get(&shape) {
            return f.clone();
        }
        let info = shapes.info(shape);
        let f = match info.key {
            FrameKey::Accept { end: true } => First {
                chars: CharSet::empty(),
                nullable: true,
            },
            FrameKey::Accept { end: false } => First {
                chars: CharSet::full(),
                nullable: true,
            },
            FrameKey::Seq(t) => {
                let next = self.shape_first(shapes, info.next);
                self.first(t).then(&next)
            }
            FrameKey::Loop(_, body) => {
                let next = self.shape_first(shapes, info.next);
                let body = self.first(body);
                First {
                    chars: body.chars.union(&next.chars),
                    nullable: next.nullable,
                }
            }
        };
        self.shape_firsts.insert(shape, f.clone());
        f
    }

    /// Number of leading sequence items of the first branch of `choice`
    /// after which the second branch, followed by the continuation, is
    /// certain to fail.
    pub fn get(&mut self, shapes: &Shapes, choice: ExprId, shape: u32) -> Option<usize> {
        if let Some(&s) = self.cache.get(&(choice, shape)) {
            return s;
        }
        let s = self.compute(shapes, choice, shape);
        self.cache.insert((choice, shape), s);
        s
    }

    fn compute(&mut self, shapes: &Shapes, choice: ExprId, shape: u32) -> Option<usize> {
        let ExprNode::Choice(f, alt) = self.g.node(choice) else {
            return None;
        };
        let (f, alt) = (*f, *alt);
        let items = self.g.pool().seq_items(f);
        let info = shapes.info(shape);
        // A loop's exit branch continues after the loop frame.
        let rest = match (self.g.node(alt), info.key) {
            (ExprNode::Stop(s), FrameKey::Loop(t, _)) if *s == t => {
                self.lang(shapes, info.next, FRAME_LOOKAHEAD)
            }
            _ => {
                let k = self.lang(shapes, shape, FRAME_LOOKAHEAD);
                Rc::new(self.regs.get(alt).concat(&k))
            }
        };
        let any = RegLang::any_string();
        let mut prefix = RegLang::epsilon();
        for (j, &item) in items.iter().enumerate().take(MAX_PREFIX_ITEMS) {
            prefix = prefix.concat(self.regs.get(item));
            if prefix.state_count() > MAX_STATES {
                return None;
            }
            if prefix.concat(&any).disjoint(&rest) {
                return Some(j + 1);
            }
        }
        None
    }

    /// Language of the continuation with shape `shape`, looking at no more
    /// than `budget` frames.
    fn lang(&mut self, shapes: &Shapes, shape: u32, budget: u32) -> Rc<RegLang> {
        if shape == NO_SHAPE {
            return Rc::new(RegLang::epsilon());
        }
        if budget == 0 {
            return Rc::new(RegLang::any_string());
        }
        if let Some(l) = self.langs.get(&(shape, budget)) {
            return l.clone();
        }
        let info = shapes.info(shape);
        let l = match info.key {
            FrameKey::Accept { end: true } => RegLang::epsilon(),
            FrameKey::Accept { end: false } => RegLang::any_string(),
            FrameKey::Seq(t) => {
                let next = self.lang(shapes, info.next, budget - 1);
                self.regs.get(t).concat(&next)
            }
            FrameKey::Loop(_, body) => {
                let next = self.lang(shapes, info.next, budget - 1);
                self.regs.get(body).star().concat(&next)
            }
        };
        let l = if l.state_count() > MAX_STATES {
            RegLang::any_string()
        } else {
            l
        };
        let l = Rc::new(l);
        self.langs.insert((shape, budget), l.clone());
        l
    }
}
