// Entry point: wires the models to the page shell and keeps the panes in
// sync. The UI polls the script hash after interactions (pollAndCompare)
// rather than trusting its own bookkeeping.

import { ApiClient, HttpTransport } from "./api.js";
import { renderFormulaBar, renderGrid, renderScriptPane } from "./dom.js";
import { UiSession } from "./session.js";

const DEMO_CSV = "A,B\nAlice,10\nBob,4\nCarol,8\nDave,9\n";

async function bootstrap(): Promise<void> {
  const api = new ApiClient(new HttpTransport(""));
  const params = new URLSearchParams(location.search);
  let notebookId = params.get("notebook");
  const page = params.get("page") ?? "p1";
  if (notebookId === null) {
    const created = await api.createNotebook({ "people.csv": DEMO_CSV });
    notebookId = created.notebook_id;
    await api.addPage(notebookId, page, "LOAD 'people.csv'");
  }
  const session = new UiSession(api, notebookId, page);
  await session.init();
  await session.refreshSuggestions();

  const gridBox = document.getElementById("grid")!;
  const formulaBox = document.getElementById("formula")!;
  const scriptBox = document.getElementById("script")!;
  const statusBox = document.getElementById("status")!;

  const callbacks = {
    onError(message: string) {
      statusBox.textContent = message;
      statusBox.classList.add("error");
    },
  };

  const rerender = (): void => {
    renderFormulaBar(session, formulaBox, callbacks);
    renderGrid(session, gridBox, callbacks, rerenderSoon);
    renderScriptPane(session, scriptBox, callbacks, rerenderSoon);
  };
  const rerenderSoon = (): void => {
    void Promise.resolve().then(async () => {
      statusBox.classList.remove("error");
      const inSync = await session.pollAndCompare();
      statusBox.textContent = inSync
        ? `notebook ${session.notebookId} - pane verified`
        : "script pane out of sync";
      await session.refreshSuggestions();
      rerender();
    });
  };

  rerender();
  rerenderSoon();
}

void bootstrap();
