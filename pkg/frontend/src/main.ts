import { ConsoleApp } from "./app.js";

new ConsoleApp(document);
