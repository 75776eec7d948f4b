//! The three process kinds behind one kernel-facing type.

use crate::controller::Controller;
use crate::msg::{Message, NodeCtx, Timer};
use crate::rsm::Replica;
use crate::simcore::{Input, Process, SimError};
use crate::switch::Switch;

pub enum Node {
    Switch(Switch),
    Controller(Box<Controller>),
    DataServer(Box<Replica>),
}

impl Node {
    pub fn as_controller(&self) -> Option<&Controller> {
        match self {
            Node::Controller(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_switch(&self) -> Option<&Switch> {
        match self {
            Node::Switch(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_replica(&self) -> Option<&Replica> {
        match self {
            Node::DataServer(r) => Some(r),
            _ => None,
        }
    }
}

impl Process for Node {
    type Msg = Message;
    type Timer = Timer;

    fn on_input(&mut self, ctx: &mut NodeCtx<'_>, input: Input<Message, Timer>) -> Result<(), SimError> {
        match (self, input) {
            (Node::Switch(s), Input::Start) => s.on_start(ctx),
            (Node::Switch(s), Input::Timer(t)) => s.on_timer(ctx, t),
            (Node::Switch(s), Input::Message { from, msg }) => s.on_message(ctx, from, msg),
            (Node::Controller(c), Input::Start) => c.on_start(ctx),
            (Node::Controller(c), Input::Timer(t)) => c.on_timer(ctx, t),
            (Node::Controller(c), Input::Message { from, msg }) => c.on_message(ctx, from, msg),
            (Node::DataServer(r), Input::Start) => {
                r.on_start(ctx);
                Ok(())
            }
            (Node::DataServer(r), Input::Timer(t)) => r.on_timer(ctx, t),
            (Node::DataServer(r), Input::Message { from, msg: Message::Rsm(m) }) => r.on_message(ctx, from, m),
            (Node::DataServer(_), Input::Message { .. }) => Ok(()),
        }
    }

    fn on_recover(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        match self {
            Node::Switch(s) => s.on_recover(ctx),
            Node::Controller(c) => c.on_recover(ctx),
            Node::DataServer(r) => r.recover(ctx),
        }
    }

    fn final_report(&self, ctx: &mut NodeCtx<'_>) {
        if let Node::DataServer(r) = self {
            r.final_report(ctx);
        }
    }
}
