import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { ConsoleView } from "./ui.js";
const root = document.getElementById("app");
if (!root) {
    throw new Error("missing #app element");
}
const controller = new SessionController(new ApiClient(""));
new ConsoleView(root, controller);
