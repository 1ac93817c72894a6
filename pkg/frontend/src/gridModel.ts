// The grid view model. It holds the last window response, a selection,
// the pending edit buffer, and the scroll origin -- and nothing else.
// Values and formula texts shown are always the server's; the model's
// only jobs are window bookkeeping (with sequence-numbered race
// resolution) and translating UI intents into gesture payloads.

import type { CellPayload, Gesture, RectTuple, SheetWindow } from "./types.js";

export interface Selection {
  c0: number;
  r0: number;
  c1: number;
  r1: number;
}

function normalized(sel: Selection): Selection {
  return {
    c0: Math.min(sel.c0, sel.c1),
    r0: Math.min(sel.r0, sel.r1),
    c1: Math.max(sel.c0, sel.c1),
    r1: Math.max(sel.r0, sel.r1),
  };
}

export function selectionRect(sel: Selection): RectTuple {
  const n = normalized(sel);
  return [n.c0, n.r0, n.c1, n.r1];
}

export class GridViewModel {
  window: SheetWindow | null = null;
  selection: Selection | null = null;
  editBuffer: string | null = null;
  clipboard: RectTuple | null = null;
  scrollCol = 0;
  scrollRow = 0;
  viewCols: number;
  viewRows: number;

  constructor(viewCols = 16, viewRows = 40) {
    this.viewCols = viewCols;
    this.viewRows = viewRows;
  }

  /** Accept a window response unless a newer one already arrived. */
  applyWindow(window: SheetWindow): boolean {
    if (this.window !== null && window.seq < this.window.seq) {
      return false; // stale racer; keep the newer snapshot
    }
    this.window = window;
    return true;
  }

  /** The half-open ranges to request for the current scroll position. */
  windowRange(): { cols: string; rows: string } {
    return {
      cols: `${this.scrollCol}:${this.scrollCol + this.viewCols}`,
      rows: `${this.scrollRow}:${this.scrollRow + this.viewRows}`,
    };
  }

  scrollTo(col: number, row: number): void {
    this.scrollCol = Math.max(0, col);
    this.scrollRow = Math.max(0, row);
  }

  /** Cell payload at absolute grid position, if inside the window. */
  cellAt(col: number, row: number): CellPayload | null {
    const w = this.window;
    if (w === null) return null;
    const ci = col - w.col_start;
    const ri = row - w.row_start;
    if (ri < 0 || ri >= w.cells.length) return null;
    if (ci < 0 || ci >= (w.cells[ri]?.length ?? 0)) return null;
    return w.cells[ri][ci];
  }

  columnName(col: number): string | null {
    const w = this.window;
    if (w === null) return null;
    const entry = w.columns.find((c) => c.index === col);
    return entry ? entry.name : null;
  }

  rowId(row: number): number | null {
    const w = this.window;
    if (w === null) return null;
    const entry = w.rows.find((r) => r.index === row);
    return entry ? entry.row_id : null;
  }

  // -- selection and editing -------------------------------------------------

  select(c0: number, r0: number, c1 = c0, r1 = r0): void {
    this.selection = { c0, r0, c1, r1 };
    this.editBuffer = null;
  }

  /** The formula bar content: the anchor cell's server-rendered formula. */
  formulaBarText(): string {
    if (this.editBuffer !== null) return this.editBuffer;
    if (this.selection === null) return "";
    const cell = this.cellAt(this.selection.c0, this.selection.r0);
    return cell ? cell.formula : "";
  }

  beginEdit(initial?: string): void {
    if (this.selection === null) return;
    this.editBuffer = initial ?? this.formulaBarText();
  }

  cancelEdit(): void {
    this.editBuffer = null; // Escape: no request is sent
  }

  /** Commit the edit buffer into an edit-cell gesture (or null if there
   * is nothing to send). */
  commitEdit(): Gesture | null {
    if (this.selection === null || this.editBuffer === null) return null;
    const text = this.editBuffer;
    this.editBuffer = null;
    return { kind: "edit_cell", col: this.selection.c0, row: this.selection.r0, text };
  }

  // -- gesture builders --------------------------------------------------------

  copy(): boolean {
    if (this.selection === null) return false;
    this.clipboard = selectionRect(this.selection);
    return true;
  }

  pasteGesture(): Gesture | null {
    if (this.clipboard === null || this.selection === null) return null;
    return { kind: "copy_paste", src: this.clipboard, dst: selectionRect(this.selection) };
  }

  cutPasteGesture(): Gesture | null {
    if (this.clipboard === null || this.selection === null) return null;
    const n = normalized(this.selection);
    return { kind: "cut_paste", src: this.clipboard, to: [n.c0, n.r0] };
  }

  dragRowsGesture(rowIds: number[], toIndex: number): Gesture {
    return { kind: "drag_rows", row_ids: rowIds, to_index: toIndex };
  }

  sortGesture(column: string, desc: boolean): Gesture {
    return { kind: "sort", keys: [{ column, desc }] };
  }

  insertRowGesture(index: number, before: boolean): Gesture {
    return { kind: "insert_row", index, before };
  }

  insertColumnGesture(index: number, before: boolean, name?: string): Gesture {
    return name === undefined
      ? { kind: "insert_column", index, before }
      : { kind: "insert_column", index, before, name };
  }

  deleteSelectedRowsGesture(): Gesture | null {
    if (this.selection === null) return null;
    const n = normalized(this.selection);
    const ids: number[] = [];
    for (let r = n.r0; r <= n.r1; r++) {
      const id = this.rowId(r);
      if (id !== null) ids.push(id);
    }
    return ids.length ? { kind: "delete_rows", row_ids: ids } : null;
  }

  filterGesture(predicate: string): Gesture {
    return { kind: "filter", predicate };
  }
}
