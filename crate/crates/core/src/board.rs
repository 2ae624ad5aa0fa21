//! Chessboard occupancy and gravity.
//!
//! Stones are only ever removed from row 0. After a removal every stone whose
//! whole span has empty cells directly beneath it drops by one row; passes
//! scan rows bottom-up and columns left-to-right and repeat until nothing
//! moves.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jobspec::{JobSpec, TaskId, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoardError {
    #[error("unknown task {0:?}")]
    UnknownTask(TaskId),
    #[error("task {task:?} is at row {row}, only bottom-row stones can be picked")]
    NotInBottomRow { task: TaskId, row: usize },
    #[error("task {0:?} is no longer on the board")]
    NotOnBoard(TaskId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Placement {
    col: usize,
    span: usize,
    kind: TaskKind,
}

/// One drop of one stone by a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descent {
    pub task: TaskId,
    pub from_row: usize,
    pub to_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PickOutcome {
    pub removed: TaskId,
    pub descents: Vec<Descent>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Board {
    width: usize,
    height: usize,
    cells: Vec<Option<TaskId>>,
    rows: Vec<Option<usize>>,
    placements: Arc<[Placement]>,
}

impl Board {
    /// Lays out every task of `spec` at its declared cell. The result may not
    /// be a gravity fixpoint; see [`Board::settle`].
    pub fn from_spec(spec: &JobSpec) -> Self {
        let placements: Arc<[Placement]> = spec
            .tasks
            .iter()
            .map(|t| Placement {
                col: t.col,
                span: t.span,
                kind: t.kind,
            })
            .collect();
        let mut board = Board {
            width: spec.width,
            height: spec.height,
            cells: vec![None; spec.width * spec.height],
            rows: vec![None; spec.tasks.len()],
            placements,
        };
        for (i, t) in spec.tasks.iter().enumerate() {
            let id = TaskId(i as u16);
            board.rows[i] = Some(t.row);
            for col in t.columns() {
                board.cells[t.row * spec.width + col] = Some(id);
            }
        }
        board
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> Option<TaskId> {
        self.cells[row * self.width + col]
    }

    pub fn row_of(&self, task: TaskId) -> Option<usize> {
        self.rows.get(task.index()).copied().flatten()
    }

    pub fn col_of(&self, task: TaskId) -> usize {
        self.placements[task.index()].col
    }

    pub fn span_of(&self, task: TaskId) -> usize {
        self.placements[task.index()].span
    }

    pub fn kind_of(&self, task: TaskId) -> TaskKind {
        self.placements[task.index()].kind
    }

    pub fn task_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_on_board(&self, task: TaskId) -> bool {
        self.row_of(task).is_some()
    }

    pub fn stones_on_board(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Option::is_none)
    }

    /// Stones on row 0, ordered by leftmost column.
    pub fn bottom_row_tasks(&self) -> Vec<TaskId> {
        let mut out = Vec::new();
        let mut col = 0;
        while col < self.width {
            match self.cells[col] {
                Some(t) => {
                    out.push(t);
                    col += self.span_of(t);
                }
                None => col += 1,
            }
        }
        out
    }

    fn can_drop(&self, task: TaskId, row: usize) -> bool {
        if row == 0 {
            return false;
        }
        let p = &self.placements[task.index()];
        let below = (row - 1) * self.width;
        self.cells[below + p.col..below + p.col + p.span]
            .iter()
            .all(Option::is_none)
    }

    fn drop_one(&mut self, task: TaskId, row: usize) {
        let (col, span) = (self.col_of(task), self.span_of(task));
        let from = row * self.width + col;
        let to = (row - 1) * self.width + col;
        for k in 0..span {
            self.cells[from + k] = None;
            self.cells[to + k] = Some(task);
        }
        self.rows[task.index()] = Some(row - 1);
    }

    /// Runs gravity passes until no stone moves, appending every drop.
    fn cascade(&mut self, descents: &mut Vec<Descent>) {
        loop {
            let mut moved = false;
            for row in 1..self.height {
                let mut col = 0;
                while col < self.width {
                    let Some(t) = self.cells[row * self.width + col] else {
                        col += 1;
                        continue;
                    };
                    if self.can_drop(t, row) {
                        self.drop_one(t, row);
                        descents.push(Descent {
                            task: t,
                            from_row: row,
                            to_row: row - 1,
                        });
                        moved = true;
                    }
                    col += self.span_of(t);
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Drops floating stones of an initial layout; returns the drops applied.
    pub fn settle(&mut self) -> Vec<Descent> {
        let mut descents = Vec::new();
        self.cascade(&mut descents);
        descents
    }

    /// Removes a bottom-row stone and applies the gravity cascade.
    pub fn remove_and_cascade(&mut self, task: TaskId) -> Result<PickOutcome, BoardError> {
        if task.index() >= self.rows.len() {
            return Err(BoardError::UnknownTask(task));
        }
        let row = self.row_of(task).ok_or(BoardError::NotOnBoard(task))?;
        if row != 0 {
            return Err(BoardError::NotInBottomRow { task, row });
        }
        let (col, span) = (self.col_of(task), self.span_of(task));
        for c in col..col + span {
            self.cells[c] = None;
        }
        self.rows[task.index()] = None;
        let mut descents = Vec::new();
        self.cascade(&mut descents);
        Ok(PickOutcome {
            removed: task,
            descents,
        })
    }

    /// True iff no stone has every cell under its span empty.
    pub fn is_gravity_fixpoint(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| match row {
            Some(r) => !self.can_drop(TaskId(i as u16), *r),
            None => true,
        })
    }

    /// One character per cell, top row first: `.` empty, `H`/`R`/`E` by kind.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(match self.cell(col, row) {
                    Some(t) => self.kind_of(t).code(),
                    None => '.',
                });
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Board {}x{}\n{}", self.width, self.height, self.render())
    }
}
