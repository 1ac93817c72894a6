// Orchestration: one notebook page, one grid model, one script pane.
// At most one mutation is in flight; window refreshes may race and are
// resolved by the response sequence numbers inside GridViewModel.

import type { ApiClient } from "./api.js";
import { GridViewModel } from "./gridModel.js";
import { ScriptPaneModel } from "./scriptPane.js";
import type { Gesture, MutationResponse } from "./types.js";

export class UiSession {
  readonly grid: GridViewModel;
  readonly pane = new ScriptPaneModel();
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    readonly notebookId: string,
    readonly page: string,
    grid?: GridViewModel,
  ) {
    this.grid = grid ?? new GridViewModel();
  }

  async init(): Promise<void> {
    this.pane.loadScript(await this.api.getScript(this.notebookId, this.page));
    await this.pane.verify();
    await this.refreshWindow();
  }

  /** POST a gesture; on success the returned statements extend the pane
   * and the window refreshes. Server errors surface to the caller. */
  async submitGesture(gesture: Gesture): Promise<MutationResponse> {
    if (this.inFlight) {
      throw new Error("a mutation is already in flight");
    }
    this.inFlight = true;
    try {
      const response = await this.api.postGesture(this.notebookId, this.page, gesture);
      this.pane.applyMutation(response);
      await this.pane.verify();
      await this.refreshWindow();
      return response;
    } finally {
      this.inFlight = false;
    }
  }

  async refreshWindow(): Promise<void> {
    const window = await this.api.getWindow(
      this.notebookId,
      this.page,
      this.grid.windowRange(),
    );
    this.grid.applyWindow(window);
  }

  async refreshSuggestions(): Promise<void> {
    const response = await this.api.getSuggestions(this.notebookId, this.page);
    this.pane.setSuggestions(response.suggestions, response.script_hash);
  }

  async acceptSuggestion(id: string): Promise<void> {
    const script = await this.api.acceptSuggestion(this.notebookId, this.page, id);
    this.pane.resetFromScript(script);
    await this.pane.verify();
    await this.refreshWindow();
    await this.refreshSuggestions();
  }

  /** Poll-and-compare: fetch the server's script and confirm the pane
   * mirrors it exactly. */
  async pollAndCompare(): Promise<boolean> {
    const script = await this.api.getScript(this.notebookId, this.page);
    const ours = await this.pane.paneHash();
    return ours === script.script_hash;
  }
}
