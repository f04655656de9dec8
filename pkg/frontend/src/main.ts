import { ApiClient } from "./client.js";
import { SessionController } from "./controller.js";
import { renderLoadFailure, renderSession } from "./view.js";

function currentPart(): 1 | 2 {
  const raw = new URLSearchParams(window.location.search).get("part");
  return raw === "2" ? 2 : 1;
}

function currentSeed(): number | undefined {
  const raw = new URLSearchParams(window.location.search).get("seed");
  if (raw === null) return undefined;
  const value = Number.parseInt(raw, 10);
  return Number.isNaN(value) ? undefined : value;
}

async function boot(): Promise<void> {
  const container = document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  const client = new ApiClient((input, init) => fetch(input, init));

  const load = async () => {
    try {
      const descriptor = await client.loadSession(currentPart(), currentSeed());
      const controller = new SessionController(descriptor);
      renderSession(container, controller, client);
    } catch (error) {
      const message = error instanceof Error ? error.message : String(error);
      renderLoadFailure(container, message, () => {
        void load();
      });
    }
  };
  await load();
}

void boot();
