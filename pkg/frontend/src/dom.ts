// DOM rendering for the grid, formula bar, script pane, and suggestion
// inbox. Pure render-from-model functions plus small event plumbing; all
// state lives in the models.

import type { UiSession } from "./session.js";
import type { Suggestion } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface UiCallbacks {
  onError(message: string): void;
}

export function renderFormulaBar(session: UiSession, container: HTMLElement,
                                 callbacks: UiCallbacks): void {
  container.textContent = "";
  const input = el("input", "formula-bar");
  input.value = session.grid.formulaBarText();
  input.addEventListener("focus", () => session.grid.beginEdit(input.value));
  input.addEventListener("input", () => session.grid.beginEdit(input.value));
  input.addEventListener("keydown", async (event) => {
    if (event.key === "Escape") {
      session.grid.cancelEdit();
      input.value = session.grid.formulaBarText();
      input.blur();
    } else if (event.key === "Enter") {
      const gesture = session.grid.commitEdit();
      if (gesture !== null) {
        try {
          await session.submitGesture(gesture);
        } catch (error) {
          callbacks.onError(String(error));
        }
      }
      input.blur();
    }
  });
  container.appendChild(input);
}

export function renderGrid(session: UiSession, container: HTMLElement,
                           callbacks: UiCallbacks,
                           rerender: () => void): void {
  const w = session.grid.window;
  container.textContent = "";
  if (w === null) return;
  const table = el("table", "grid");
  const head = el("tr");
  head.appendChild(el("th", "corner", ""));
  for (const column of w.columns) {
    const th = el("th", "col-head", column.name);
    th.addEventListener("click", async () => {
      try {
        await session.submitGesture(session.grid.sortGesture(column.name, true));
        rerender();
      } catch (error) {
        callbacks.onError(String(error));
      }
    });
    head.appendChild(th);
  }
  table.appendChild(head);
  const selection = session.grid.selection;
  w.rows.forEach((row, ri) => {
    const tr = el("tr");
    const rowHead = el("th", "row-head", String(row.index + 1));
    rowHead.draggable = true;
    rowHead.addEventListener("dragstart", (event) => {
      event.dataTransfer?.setData("text/row-id", String(row.row_id));
    });
    rowHead.addEventListener("dragover", (event) => event.preventDefault());
    rowHead.addEventListener("drop", async (event) => {
      event.preventDefault();
      const dragged = Number(event.dataTransfer?.getData("text/row-id"));
      if (!Number.isNaN(dragged)) {
        try {
          await session.submitGesture(
            session.grid.dragRowsGesture([dragged], row.index));
          rerender();
        } catch (error) {
          callbacks.onError(String(error));
        }
      }
    });
    tr.appendChild(rowHead);
    w.columns.forEach((column, ci) => {
      const payload = w.cells[ri][ci];
      const td = el("td", `cell type-${payload.type}`, payload.display);
      const isSelected = selection !== null
        && column.index >= Math.min(selection.c0, selection.c1)
        && column.index <= Math.max(selection.c0, selection.c1)
        && row.index >= Math.min(selection.r0, selection.r1)
        && row.index <= Math.max(selection.r0, selection.r1);
      if (isSelected) td.classList.add("selected");
      td.addEventListener("click", (event) => {
        if (event.shiftKey && selection !== null) {
          session.grid.select(selection.c0, selection.r0, column.index, row.index);
        } else {
          session.grid.select(column.index, row.index);
        }
        rerender();
      });
      td.addEventListener("dblclick", () => {
        session.grid.select(column.index, row.index);
        session.grid.beginEdit();
        rerender();
      });
      tr.appendChild(td);
    });
    table.appendChild(tr);
  });
  container.appendChild(table);
}

export function renderScriptPane(session: UiSession, container: HTMLElement,
                                 callbacks: UiCallbacks,
                                 rerender: () => void): void {
  container.textContent = "";
  const list = el("ol", "script-pane");
  const sourceItem = el("li", "statement source", session.pane.source + ";");
  list.appendChild(sourceItem);
  for (const statement of session.pane.statements) {
    const item = el("li", "statement", statement.text + ";");
    if (statement.gesture_group !== null) {
      item.dataset.gestureGroup = String(statement.gesture_group);
      item.addEventListener("mouseenter", () => {
        for (const index of session.pane.statementsForGroup(statement.gesture_group!)) {
          list.children[index + 1]?.classList.add("group-highlight");
        }
      });
      item.addEventListener("mouseleave", () => {
        for (const node of Array.from(list.children)) {
          node.classList.remove("group-highlight");
        }
      });
    }
    list.appendChild(item);
  }
  container.appendChild(list);
  container.appendChild(renderSuggestions(session, callbacks, rerender));
}

function renderSuggestions(session: UiSession, callbacks: UiCallbacks,
                           rerender: () => void): HTMLElement {
  const box = el("div", "suggestions");
  if (session.pane.suggestions.length === 0) return box;
  box.appendChild(el("h3", undefined, "Suggestions"));
  for (const suggestion of session.pane.suggestions) {
    box.appendChild(renderSuggestion(session, suggestion, callbacks, rerender));
  }
  return box;
}

function renderSuggestion(session: UiSession, suggestion: Suggestion,
                          callbacks: UiCallbacks,
                          rerender: () => void): HTMLElement {
  const card = el("div", `suggestion kind-${suggestion.kind.toLowerCase()}`);
  const badge = suggestion.verified ? "verified" : "data-dependent";
  card.appendChild(el("div", "suggestion-head",
                      `${suggestion.kind} (${badge})`));
  for (const line of suggestion.replacement) {
    card.appendChild(el("code", "replacement", line + ";"));
  }
  const actions = el("div", "suggestion-actions");
  const accept = el("button", undefined, "Accept");
  accept.addEventListener("click", async () => {
    try {
      await session.acceptSuggestion(suggestion.id);
    } catch (error) {
      callbacks.onError(String(error));
      await session.refreshSuggestions(); // stale: refetch prompt
    }
    rerender();
  });
  const dismiss = el("button", undefined, "Dismiss");
  dismiss.addEventListener("click", () => {
    session.pane.dismiss(suggestion.id);
    rerender();
  });
  actions.appendChild(accept);
  actions.appendChild(dismiss);
  card.appendChild(actions);
  return card;
}
