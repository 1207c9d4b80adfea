/**
 * UI state for the operations console.
 *
 * The model is deliberately dialog-free: there is no modal state anywhere,
 * only screens, an inline banner, a pseudo-shell pane and a log pane.  All
 * recipe inputs carry visible defaults supplied by the backend catalog, so
 * every action works with zero typing.
 */

export interface SessionEvent {
  seq: number;
  kind: string; // command | output | prompt | log | status | ...
  payload: string;
  origin: string;
}

export interface RecipeInfo {
  name: string;
  inputs: Record<string, string>;
  description: string;
}

export interface TabField {
  name: string;
  value: string;
  defaultValue: string;
}

export interface Tab {
  name: string;
  description: string;
  fields: TabField[];
}

export type Screen = "create" | "work";

export interface ScreenModel {
  screen: Screen;
  /** Inline error text; rendered as a banner, never as a dialog. */
  banner: string | null;
  tabsEnabled: boolean;
  tabs: Tab[];
  activeTab: number;
  packages: string[];
  shell: SessionEvent[];
  entryEnabled: boolean;
  log: SessionEvent[];
  lastSeq: number;
}

export interface WorkdirSummary {
  package_count: number;
  packages: string[];
  suggested_screen: string;
}

export function createModel(): ScreenModel {
  return {
    screen: "create",
    banner: null,
    tabsEnabled: true,
    tabs: [],
    activeTab: 0,
    packages: [],
    shell: [],
    entryEnabled: false,
    log: [],
    lastSeq: 0,
  };
}

/** Build one tab per catalog recipe; inputs become prefilled inline fields. */
export function applyCatalog(model: ScreenModel, recipes: RecipeInfo[]): void {
  model.tabs = recipes.map((recipe) => ({
    name: recipe.name,
    description: recipe.description,
    fields: Object.entries(recipe.inputs).map(([name, value]) => ({
      name,
      value,
      defaultValue: value,
    })),
  }));
  if (model.activeTab >= model.tabs.length) {
    model.activeTab = 0;
  }
}

/** Pick the startup screen from the work directory summary. */
export function renderWorkspace(
  model: ScreenModel,
  summary: WorkdirSummary,
): void {
  model.banner = null;
  model.tabsEnabled = true;
  model.packages = [...summary.packages];
  model.screen = summary.package_count === 0 ? "create" : "work";
}

/** The service being down is an inline banner, never a dialog. */
export function serviceUnreachable(model: ScreenModel, detail: string): void {
  model.banner = `service unreachable: ${detail}`;
  model.tabsEnabled = false;
}

const SHELL_KINDS = new Set(["command", "output", "prompt", "input"]);

/**
 * Fold one stream event into the model.
 *
 * Returns false for events at or below the last applied sequence number,
 * so overlapping resubscriptions never duplicate a line.  The entry box
 * enables exactly on prompt events and disables again once a command is
 * underway.
 */
export function applyEvent(model: ScreenModel, event: SessionEvent): boolean {
  if (event.seq <= model.lastSeq) {
    return false;
  }
  model.lastSeq = event.seq;
  if (SHELL_KINDS.has(event.kind)) {
    model.shell.push(event);
  } else {
    model.log.push(event);
  }
  if (event.kind === "prompt") {
    model.entryEnabled = true;
  } else if (event.kind === "command" || event.kind === "input") {
    model.entryEnabled = false;
  }
  return true;
}

/** Exactly the command-kind events, newline-joined: a replayable script. */
export function copyCommands(model: ScreenModel): string {
  return model.shell
    .filter((event) => event.kind === "command")
    .map((event) => event.payload)
    .join("\n");
}

/** Sequence audit: true when the transcript has no gaps or duplicates. */
export function transcriptContiguous(model: ScreenModel): boolean {
  const seqs = [...model.shell, ...model.log]
    .map((event) => event.seq)
    .sort((a, b) => a - b);
  return seqs.every((seq, i) => i === 0 || seq > seqs[i - 1]);
}
